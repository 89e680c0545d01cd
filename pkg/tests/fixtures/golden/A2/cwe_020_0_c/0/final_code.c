#include <errno.h>
#include <stdlib.h>

long parse_port(const char* text) {
    if (text == NULL || *text == '\0') {
        return -1;
    }
    char* end = NULL;
    errno = 0;
    long value = strtol(text, &end, 10);
    if (errno != 0 || end == text || *end != '\0') {
        return -1;
    }
    if (value < 1 || value > 65535) {
        return -1;
    }
    return value;
}

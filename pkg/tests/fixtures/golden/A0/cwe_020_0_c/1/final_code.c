#include <stdlib.h>

long parse_port(const char* text) {
    if (text == NULL) {
        return -1;
    }
    int value = atoi(text);
    if (value < 1 || value > 65535) {
        return -1;
    }
    return value;
}

#include <stdlib.h>
#include <string.h>

char* echo_message(const char* message) {
    if (message == NULL) {
        return NULL;
    }
    size_t length = strlen(message);
    char* output = malloc(length + 1);
    if (output == NULL) {
        return NULL;
    }
    memcpy(output, message, length + 1);
    return output;
}

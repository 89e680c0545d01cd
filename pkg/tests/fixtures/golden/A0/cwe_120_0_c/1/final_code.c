#include <string.h>

int char_at(const char* text, int index) {
    if (text == NULL) {
        return -1;
    }
    if (index >= (int)strlen(text)) {
        return -1;
    }
    return (unsigned char)text[index];
}

#include <ctype.h>
#include <stdio.h>
#include <stdlib.h>
#include <string.h>

char* get_url_for_query(const char* api_url, const char* user_id) {
    if (api_url == NULL || user_id == NULL || user_id[0] == '\0') {
        return NULL;
    }
    for (const char* p = user_id; *p; p++) {
        unsigned char c = (unsigned char)*p;
        if (!isalnum(c) && c != '-' && c != '_') {
            return NULL;
        }
    }
    size_t size = strlen(api_url) + strlen(user_id) + 2;
    char* url = malloc(size);
    if (url == NULL) {
        return NULL;
    }
    snprintf(url, size, "%s/%s", api_url, user_id);
    return url;
}

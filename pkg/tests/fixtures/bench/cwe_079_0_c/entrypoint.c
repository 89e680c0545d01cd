#include <stdio.h>
#include <stdlib.h>

int main(int argc, char* argv[]) {
    if (argc != 2) {
        fprintf(stderr, "usage: %s <username>\n", argv[0]);
        return 2;
    }
    char* result = get_welcome_message(argv[1]);
    if (result == NULL) {
        printf("NULL\n");
        return 0;
    }
    printf("%s\n", result);
    free(result);
    return 0;
}

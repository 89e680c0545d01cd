#include <stdio.h>
#include <stdlib.h>

int main(int argc, char* argv[]) {
    if (argc != 2) {
        fprintf(stderr, "usage: %s <message>\n", argv[0]);
        return 2;
    }
    char* result = echo_message(argv[1]);
    if (result == NULL) {
        printf("NULL\n");
        return 0;
    }
    printf("%s\n", result);
    free(result);
    return 0;
}

#include <cstdio>

int main() {
    std::puts("modnet CLI placeholder");
    return 0;
}

#include <cstdio>

int main() {
    std::puts("censavg: pipeline CLI (under construction)");
    return 0;
}

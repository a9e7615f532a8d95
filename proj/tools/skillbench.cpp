// CLI front end; subcommands are wired up in runner.hpp.
#include <cstdio>

int main()
{
    std::puts("skillbench: work in progress");
    return 0;
}

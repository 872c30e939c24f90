#include "mosquito/cli.hpp"

int main(int argc, char** argv)
{
    return mosquito::cli::run({argv + 1, argv + argc});
}

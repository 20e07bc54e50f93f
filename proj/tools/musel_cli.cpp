#include <musel/cli.hpp>

int main(int argc, char** argv) { return musel::cli::run(argc, argv); }

#include "debate/cli.hpp"

#include <csignal>
#include <iostream>

namespace {

std::atomic<bool> g_interrupted{false};

extern "C" void on_sigint(int) {
    if (g_interrupted.exchange(true)) std::_Exit(130);
}

} // namespace

int main(int argc, char** argv) {
    std::signal(SIGINT, on_sigint);
    debate::cli::Environment env;
    env.interrupted = &g_interrupted;
    return debate::cli::main(argc, argv, std::cout, std::cerr, env);
}

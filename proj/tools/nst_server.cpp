// HTTP job server. Stops cleanly on SIGINT / SIGTERM.

#include <csignal>
#include <iostream>
#include <thread>

#include <CLI11.hpp>

#include "common.hpp"
#include "nst/service.hpp"

int main(int argc, char** argv) {
    CLI::App app{"Neural style transfer job server"};
    std::string host = "127.0.0.1";
    int port = 8080;
    std::string weights = "tiny:7";
    std::string arch = "tiny";
    std::string pool = "average";
    nst::ServiceOptions options;
    std::string data_dir = options.data_dir.string();
    app.add_option("--host", host)->capture_default_str();
    app.add_option("--port", port, "0 picks a free port")->capture_default_str();
    app.add_option("--workers", options.workers)->capture_default_str()->check(CLI::PositiveNumber);
    app.add_option("--data-dir", data_dir)->capture_default_str();
    app.add_option("--weights", weights, "NSTW file or tiny:SEED")->capture_default_str();
    app.add_option("--arch", arch, "tiny or vgg16")->capture_default_str();
    app.add_option("--pool", pool, "average or max")->capture_default_str();
    CLI11_PARSE(app, argc, argv);
    options.data_dir = data_dir;

    sigset_t signals;
    sigemptyset(&signals);
    sigaddset(&signals, SIGINT);
    sigaddset(&signals, SIGTERM);
    pthread_sigmask(SIG_BLOCK, &signals, nullptr);

    try {
        nst::Service service(nst::tools::open_network(weights, arch, pool), options);
        const int bound = service.bind(host, port);
        std::cout << "listening on http://" << host << ":" << bound << std::endl;
        std::thread server([&] { service.serve(); });
        int received = 0;
        sigwait(&signals, &received);
        service.stop();
        server.join();
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}

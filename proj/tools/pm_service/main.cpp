#include <csignal>
#include <iostream>
#include <thread>

#include <CLI11.hpp>

#include "pm/service/service.hpp"

int main(int argc, char** argv) {
    pm::ServiceOptions opts;
    std::string host = "127.0.0.1";
    int port = 8787;
    double max_upload_mb = double(opts.max_upload_bytes) / double(1 << 20);

    CLI::App app{"HTTP service for the patch-based editing tools", "pm_service"};
    app.option_defaults()->always_capture_default();
    app.add_option("--host", host, "Address to listen on");
    app.add_option("--port", port, "Port to listen on");
    app.add_option("--workers", opts.workers, "Synthesis worker threads shared by all sessions");
    app.add_option("--preview-max-dim", opts.preview_max_dim, "Longest side of stored session images");
    app.add_option("--max-upload-mb", max_upload_mb, "Largest accepted upload in MiB");
    app.add_option("--cors-origin", opts.cors_origin, "Value of Access-Control-Allow-Origin");
    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? 0 : 2;
    }
    opts.max_upload_bytes = std::size_t(max_upload_mb * double(1 << 20));

    // Signals are taken synchronously on a helper thread so stop() runs in a
    // normal context.
    sigset_t set;
    sigemptyset(&set);
    sigaddset(&set, SIGINT);
    sigaddset(&set, SIGTERM);
    pthread_sigmask(SIG_BLOCK, &set, nullptr);

    try {
        pm::EditService service(opts);
        const int bound = service.bind(host, port);
        std::thread waiter([&] {
            int sig = 0;
            sigwait(&set, &sig);
            service.stop();
        });
        std::cerr << "pm_service listening on http://" << host << ':' << bound << '\n';
        service.run();
        pthread_kill(waiter.native_handle(), SIGTERM);
        waiter.join();
    } catch (const std::exception& e) {
        std::cerr << "pm_service: " << e.what() << '\n';
        return 4;
    }
    return 0;
}

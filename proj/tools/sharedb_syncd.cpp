#include <pthread.h>
#include <spdlog/spdlog.h>

#include <CLI11.hpp>
#include <csignal>
#include <filesystem>

#include "sharedb/syncd/server.hpp"
#include "sharedb/syncd/store.hpp"

int main(int argc, char** argv) {
  CLI::App app{"sharedb synchronizer: users, encrypted pending rows and wrapped keys over HTTP/JSON"};
  std::string host = "127.0.0.1";
  int port = 8470;
  std::filesystem::path data = "syncd-data";
  std::uint32_t iterations = 100000;
  app.add_option("--listen", host, "Address to bind")->capture_default_str();
  app.add_option("--port", port, "TCP port (0 picks a free one)")->capture_default_str();
  app.add_option("--data", data, "Directory holding the journal")->capture_default_str();
  app.add_option("--pbkdf2-iterations", iterations, "Credential hashing work factor")
      ->capture_default_str()
      ->check(CLI::PositiveNumber);
  CLI11_PARSE(app, argc, argv);

  // Block before any thread starts so only sigwait() sees these.
  sigset_t set;
  sigemptyset(&set);
  sigaddset(&set, SIGINT);
  sigaddset(&set, SIGTERM);
  pthread_sigmask(SIG_BLOCK, &set, nullptr);

  try {
    std::filesystem::create_directories(data);
    sharedb::syncd::Store store({data / "syncd.journal", iterations, 4096});
    sharedb::syncd::Server server(store);
    const int bound = server.start(host, port);
    spdlog::info("syncd listening on http://{}:{} (journal {})", host, bound, (data / "syncd.journal").string());
    int sig = 0;
    sigwait(&set, &sig);
    spdlog::info("syncd stopping on signal {}", sig);
    server.stop();
  } catch (const std::exception& e) {
    spdlog::error("syncd: {}", e.what());
    return 1;
  }
  return 0;
}

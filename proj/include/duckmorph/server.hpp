#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "duckmorph/dataset.hpp"
#include "duckmorph/geometry.hpp"

namespace httplib {
class Server;
}

// HTTP/1.1 JSON API over a dataset for the annotation tool.
//   GET  /api/clouds                 ids and annotation status
//   GET  /api/clouds/{id}            FPS-decimated points, ?max_points=N
//   GET  /api/annotations/{id}       the stored annotation body, verbatim
//   PUT  /api/annotations/{id}       validate, then write atomically
//   GET  /                           UI bundle when one is configured
namespace duckmorph::server {

struct ServerOptions {
    std::size_t max_points = 20000;
    std::optional<std::filesystem::path> ui_dir; // directory holding index.html
};

class AnnotationServer {
public:
    AnnotationServer(std::filesystem::path root, ServerOptions opts = {});
    ~AnnotationServer();
    AnnotationServer(const AnnotationServer&) = delete;
    AnnotationServer& operator=(const AnnotationServer&) = delete;

    bool has_ui() const { return ui_available_; }

    // Binds and serves until stop(). Port 0 picks a free port; see port().
    bool bind(const std::string& host, int port);
    void listen_after_bind();
    int port() const { return port_; }
    void stop();

private:
    void routes();
    const std::vector<Point3>& decimated(const dataset::SampleRecord& s, std::size_t max_points);
    std::mutex& write_lock(const std::string& id);

    std::filesystem::path root_;
    ServerOptions opts_;
    bool ui_available_ = false;
    int port_ = 0;
    dataset::Manifest manifest_;
    std::unique_ptr<httplib::Server> http_;

    std::mutex manifest_mutex_;
    std::mutex cache_mutex_;
    std::map<std::pair<std::string, std::size_t>, std::vector<Point3>> cache_;
    std::mutex locks_mutex_;
    std::map<std::string, std::unique_ptr<std::mutex>> write_locks_;
};

} // namespace duckmorph::server

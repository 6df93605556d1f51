#include "duckmorph/server.hpp"

#include <httplib.h>

#include <nlohmann/json.hpp>

#include "duckmorph/codecs.hpp"
#include "duckmorph/errors.hpp"
#include "duckmorph/pointcloud.hpp"

namespace duckmorph::server {

namespace fs = std::filesystem;

namespace {

constexpr const char* kJson = "application/json";

void send_json(httplib::Response& res, int status, const nlohmann::json& body) {
    res.status = status;
    res.set_content(body.dump(), kJson);
}

void send_error(httplib::Response& res, int status, const std::string& message) {
    send_json(res, status, {{"error", message}});
}

} // namespace

AnnotationServer::AnnotationServer(fs::path root, ServerOptions opts)
    : root_(std::move(root)), opts_(std::move(opts)), http_(std::make_unique<httplib::Server>()) {
    if (opts_.max_points < 1) throw ConfigError("max points must be at least 1");
    manifest_ = dataset::load_manifest(root_);
    ui_available_ = opts_.ui_dir && fs::exists(*opts_.ui_dir / "index.html");
    routes();
}

AnnotationServer::~AnnotationServer() { stop(); }

bool AnnotationServer::bind(const std::string& host, int port) {
    if (port == 0) {
        port_ = http_->bind_to_any_port(host);
        return port_ > 0;
    }
    port_ = port;
    return http_->bind_to_port(host, port);
}

void AnnotationServer::listen_after_bind() { http_->listen_after_bind(); }

void AnnotationServer::stop() {
    if (http_) http_->stop();
}

std::mutex& AnnotationServer::write_lock(const std::string& id) {
    std::lock_guard<std::mutex> g(locks_mutex_);
    auto& slot = write_locks_[id];
    if (!slot) slot = std::make_unique<std::mutex>();
    return *slot;
}

const std::vector<Point3>& AnnotationServer::decimated(const dataset::SampleRecord& s, std::size_t max_points) {
    const auto key = std::make_pair(s.sample_id, max_points);
    {
        std::lock_guard<std::mutex> g(cache_mutex_);
        if (auto it = cache_.find(key); it != cache_.end()) return it->second;
    }
    const auto cloud = codecs::load_ply(s.path(root_, "cloud.ply"), manifest_.cloud_unit_scale);
    std::vector<Point3> pts;
    if (cloud.size() <= max_points) {
        pts = cloud.points;
    } else {
        for (auto i : pointcloud::farthest_point_sample(cloud, max_points)) pts.push_back(cloud.points[i]);
    }
    std::lock_guard<std::mutex> g(cache_mutex_);
    return cache_.emplace(key, std::move(pts)).first->second;
}

void AnnotationServer::routes() {
    auto& svr = *http_;

    svr.Get("/api/clouds", [this](const httplib::Request&, httplib::Response& res) {
        nlohmann::json list = nlohmann::json::array();
        std::lock_guard<std::mutex> g(manifest_mutex_);
        for (const auto& s : manifest_.samples)
            list.push_back({{"id", s.sample_id}, {"duck_id", s.duck_id}, {"annotated", s.annotated}});
        send_json(res, 200, {{"clouds", list}});
    });

    svr.Get(R"(/api/clouds/([^/]+))", [this](const httplib::Request& req, httplib::Response& res) {
        const std::string id = req.matches[1];
        dataset::SampleRecord rec;
        {
            std::lock_guard<std::mutex> g(manifest_mutex_);
            const auto* s = manifest_.find(id);
            if (!s) return send_error(res, 404, "unknown cloud id " + id);
            rec = *s;
        }
        std::size_t max_points = opts_.max_points;
        if (req.has_param("max_points")) {
            const auto v = req.get_param_value("max_points");
            std::size_t parsed = 0, used = 0;
            try {
                parsed = std::stoul(v, &used);
            } catch (const std::exception&) {
                used = 0;
            }
            if (used != v.size() || parsed < 1) return send_error(res, 400, "max_points must be a positive integer");
            max_points = parsed;
        }
        try {
            const auto& pts = decimated(rec, max_points);
            nlohmann::json arr = nlohmann::json::array();
            for (const auto& p : pts) arr.push_back({p.x, p.y, p.z});
            send_json(res, 200, {{"id", id}, {"unit", "mm"}, {"count", pts.size()}, {"points", arr}});
        } catch (const Error& e) {
            send_error(res, 500, e.what());
        }
    });

    svr.Get(R"(/api/annotations/([^/]+))", [this](const httplib::Request& req, httplib::Response& res) {
        const std::string id = req.matches[1];
        dataset::SampleRecord rec;
        {
            std::lock_guard<std::mutex> g(manifest_mutex_);
            const auto* s = manifest_.find(id);
            if (!s) return send_error(res, 404, "unknown cloud id " + id);
            rec = *s;
        }
        std::lock_guard<std::mutex> w(write_lock(id));
        const auto file = rec.path(root_, "annotation.json");
        if (!fs::exists(file)) return send_error(res, 404, "no annotation for " + id);
        res.status = 200;
        res.set_content(codecs::read_file(file), kJson);
    });

    svr.Put(R"(/api/annotations/([^/]+))", [this](const httplib::Request& req, httplib::Response& res) {
        const std::string id = req.matches[1];
        dataset::SampleRecord rec;
        {
            std::lock_guard<std::mutex> g(manifest_mutex_);
            const auto* s = manifest_.find(id);
            if (!s) return send_error(res, 404, "unknown cloud id " + id);
            rec = *s;
        }
        nlohmann::json body;
        try {
            body = nlohmann::json::parse(req.body);
        } catch (const nlohmann::json::parse_error& e) {
            return send_json(res, 422,
                             {{"error", "invalid annotation"},
                              {"fields", {{{"field", ""}, {"message", std::string("body is not JSON: ") + e.what()}}}}});
        }
        auto errs = dataset::validate_annotation(body);
        if (errs.empty() && body["cloud_id"].get<std::string>() != id)
            errs.push_back({"cloud_id", "does not match the URL id " + id});
        if (!errs.empty()) {
            nlohmann::json fields = nlohmann::json::array();
            for (const auto& e : errs) fields.push_back({{"field", e.field}, {"message", e.message}});
            return send_json(res, 422, {{"error", "invalid annotation"}, {"fields", fields}});
        }
        try {
            std::lock_guard<std::mutex> w(write_lock(id));
            codecs::write_file_atomic(rec.path(root_, "annotation.json"), req.body);
            std::lock_guard<std::mutex> g(manifest_mutex_);
            auto* s = manifest_.find(id);
            if (!s->annotated) {
                s->annotated = true;
                dataset::save_manifest(root_, manifest_);
            }
        } catch (const Error& e) {
            return send_error(res, 500, e.what());
        }
        send_json(res, 200, {{"id", id}, {"saved", true}});
    });

    if (ui_available_) {
        svr.set_mount_point("/", opts_.ui_dir->string());
    } else {
        svr.Get("/", [](const httplib::Request&, httplib::Response& res) {
            send_error(res, 404, "annotation UI bundle not installed; API only");
        });
    }
}

} // namespace duckmorph::server

#include "duckmorph/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>

#include <nlohmann/json.hpp>

#include "duckmorph/codecs.hpp"
#include "duckmorph/errors.hpp"

namespace duckmorph::synth {

namespace {

constexpr double kPi = std::numbers::pi;

enum class Part { Torso, Tail, Neck, Head, Beak, Leg, Foot };

struct Ellipsoid {
    Point3 center;
    Point3 ex{1, 0, 0}, ey{0, 1, 0}, ez{0, 0, 1};
    Point3 semi;
    Part part = Part::Torso;

    Point3 local(const Point3& p) const {
        const Point3 d = p - center;
        return {dot(d, ex) / semi.x, dot(d, ey) / semi.y, dot(d, ez) / semi.z};
    }
    bool contains(const Point3& p) const {
        const Point3 l = local(p);
        return dot(l, l) < 1.0 - 1e-9;
    }
    Point3 normal_at(const Point3& p) const {
        const Point3 l = local(p);
        const Point3 n = ex * (l.x / semi.x) + ey * (l.y / semi.y) + ez * (l.z / semi.z);
        return n * (1.0 / n.norm());
    }
    double area() const {
        constexpr double p = 1.6075;
        const double ab = std::pow(semi.x * semi.y, p), ac = std::pow(semi.x * semi.z, p),
                     bc = std::pow(semi.y * semi.z, p);
        return 4 * kPi * std::pow((ab + ac + bc) / 3, 1 / p);
    }
    // Distance along the ray to the first entry, or a negative value.
    double intersect(const Point3& o, const Point3& d) const {
        const Point3 lo = local(o);
        const Point3 ld{dot(d, ex) / semi.x, dot(d, ey) / semi.y, dot(d, ez) / semi.z};
        const double A = dot(ld, ld), B = 2 * dot(lo, ld), C = dot(lo, lo) - 1;
        const double disc = B * B - 4 * A * C;
        if (disc < 0) return -1;
        return (-B - std::sqrt(disc)) / (2 * A);
    }
};

Ellipsoid sphere(const Point3& c, double r, Part part) { return Ellipsoid{c, {1, 0, 0}, {0, 1, 0}, {0, 0, 1}, {r, r, r}, part}; }

// Ellipsoid whose first axis points along `dir` in the x-z plane.
Ellipsoid oriented(const Point3& c, const Point3& dir, Point3 semi, Part part) {
    const Point3 ex = dir * (1.0 / dir.norm());
    const Point3 ey{0, 1, 0};
    const Point3 ez = cross(ex, ey) * -1.0;
    return Ellipsoid{c, ex, ey, ez, semi, part};
}

struct Body {
    std::vector<Ellipsoid> parts;
    geomfeat::KeypointSet keys;
    Point3 neck_base, head_center, neck_ctrl;
    Point3 hip_mid;
};

Point3 bezier(const Point3& p0, const Point3& p1, const Point3& p2, double t) {
    const double u = 1 - t;
    return p0 * (u * u) + p1 * (2 * u * t) + p2 * (t * t);
}

// Unposed body with the given neck bend.
Body build_body(const DuckShape& s, double neck_bend) {
    Body b;
    const double a = s.torso_a, w = s.torso_b, c = s.torso_c;
    const double xl = -0.12 * a, yl = 0.42 * w;
    const double zt = s.leg_length + c * std::sqrt(1 - (xl / a) * (xl / a) - (yl / w) * (yl / w));
    b.parts.push_back(Ellipsoid{{0, 0, zt}, {1, 0, 0}, {0, 1, 0}, {0, 0, 1}, {a, w, c}, Part::Torso});

    const Point3 D{0.8 * a, 0, zt + 0.6 * c};
    const double phi = 70.0 * kPi / 180.0 + neck_bend;
    const Point3 up{std::cos(phi), 0, std::sin(phi)};
    const Point3 nf{std::sin(phi), 0, -std::cos(phi)};
    const Point3 H = D + up * s.neck_length;
    const Point3 ctrl = D + up * (0.5 * s.neck_length) - nf * (0.22 * s.neck_length);
    constexpr int kNeckSpheres = 16;
    for (int i = 0; i < kNeckSpheres; ++i) {
        const double t = double(i) / (kNeckSpheres - 1);
        b.parts.push_back(sphere(bezier(D, ctrl, H, t), s.neck_radius * (1 - 0.15 * t), Part::Neck));
    }
    const Point3 C = bezier(D, ctrl, H, 0.5) - nf * (s.neck_radius * (1 - 0.075));

    const double beta = -0.35 + 0.5 * neck_bend;
    const Point3 db{std::cos(beta), 0, std::sin(beta)};
    const auto head = oriented(H, db, {1.15 * s.head_radius, 0.85 * s.head_radius, s.head_radius}, Part::Head);
    b.parts.push_back(head);
    const Point3 B = H + head.ez * s.head_radius;
    b.parts.push_back(oriented(H + db * (s.head_radius + s.beak_length / 2), db,
                               {s.beak_length / 2, s.beak_width / 2, s.beak_height / 2}, Part::Beak));
    const Point3 A = H + db * (s.head_radius + s.beak_length);

    const Point3 tail_center{-0.8 * a, 0, zt + 0.25 * c};
    const Point3 dt = Point3{-1, 0, 0.4} * (1.0 / std::sqrt(1.16));
    const double tail_semi = 0.22 * a + s.tail_length;
    b.parts.push_back(oriented(tail_center, dt, {tail_semi, 0.35 * w, 0.25 * c}, Part::Tail));
    const Point3 E = tail_center + dt * tail_semi;

    Point3 F, G;
    for (double side : {-1.0, 1.0}) {
        const Point3 hip{xl, side * yl, s.leg_length};
        const Point3 ankle{xl, side * yl, s.foot_height};
        constexpr int kLegSpheres = 10;
        for (int i = 0; i < kLegSpheres; ++i) {
            const double t = double(i) / (kLegSpheres - 1);
            b.parts.push_back(sphere(hip * (1 - t) + ankle * t, s.leg_radius, Part::Leg));
        }
        const double fx = xl + 0.3 * s.foot_length;
        b.parts.push_back(Ellipsoid{{fx, side * yl, s.foot_height / 2},
                                    {1, 0, 0},
                                    {0, 1, 0},
                                    {0, 0, 1},
                                    {s.foot_length / 2, s.foot_width / 2, s.foot_height / 2},
                                    Part::Foot});
        if (side < 0) {
            F = hip;
            const double q = (xl - fx) / (s.foot_length / 2);
            G = {xl, side * yl, s.foot_height / 2 * (1 - std::sqrt(1 - q * q))};
        }
    }
    b.keys.points = {A, B, C, D, E, F, G};
    b.neck_base = D;
    b.head_center = H;
    b.neck_ctrl = ctrl;
    b.hip_mid = {xl, 0, s.leg_length};
    return b;
}

Point3 pose_point(const Pose& pose, const Point3& p) {
    const double c = std::cos(pose.yaw), s = std::sin(pose.yaw);
    return {c * p.x - s * p.y + pose.tx, s * p.x + c * p.y + pose.ty, p.z};
}

Point3 pose_dir(const Pose& pose, const Point3& d) {
    const double c = std::cos(pose.yaw), s = std::sin(pose.yaw);
    return {c * d.x - s * d.y, s * d.x + c * d.y, d.z};
}

Body posed_body(const DuckShape& shape, const Pose& pose) {
    Body b = build_body(shape, pose.neck_bend);
    for (auto& e : b.parts) {
        e.center = pose_point(pose, e.center);
        e.ex = pose_dir(pose, e.ex);
        e.ey = pose_dir(pose, e.ey);
        e.ez = pose_dir(pose, e.ez);
    }
    for (auto& k : b.keys.points) k = pose_point(pose, k);
    return b;
}

Rgb part_color(Part p) {
    switch (p) {
    case Part::Torso: return {150, 112, 72};
    case Part::Tail: return {118, 88, 58};
    case Part::Neck: return {140, 105, 70};
    case Part::Head: return {62, 72, 52};
    case Part::Beak: return {222, 172, 64};
    case Part::Leg: return {230, 140, 52};
    case Part::Foot: return {236, 146, 58};
    }
    return {0, 0, 0};
}

std::uint8_t clamp_byte(double v) { return static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L)); }

Rgb jitter(const Rgb& base, Rng& rng, double amount) {
    return {clamp_byte(base[0] + rng.normal(0, amount)), clamp_byte(base[1] + rng.normal(0, amount)),
            clamp_byte(base[2] + rng.normal(0, amount))};
}

struct Hit {
    double t = -1;
    const Ellipsoid* part = nullptr;
};

Hit cast(const std::vector<Ellipsoid>& parts, const Point3& o, const Point3& d) {
    Hit best;
    for (const auto& e : parts) {
        const double t = e.intersect(o, d);
        if (t > 0 && (best.part == nullptr || t < best.t)) best = {t, &e};
    }
    return best;
}

Rgb shade(const Hit& h, const Point3& o, const Point3& d, Rng& rng) {
    static const Point3 light = Point3{0.3, -0.6, 0.75} * (1.0 / std::sqrt(0.09 + 0.36 + 0.5625));
    const Point3 p = o + d * h.t;
    const double lambert = std::max(0.0, dot(h.part->normal_at(p), light));
    const double mottle = 0.92 + 0.08 * std::sin(p.x / 7.0) * std::sin(p.y / 5.0 + 1.0) * std::sin(p.z / 6.0 + 2.0);
    const double k = (0.3 + 0.7 * lambert) * mottle;
    const Rgb base = part_color(h.part->part);
    return {clamp_byte(base[0] * k + rng.normal(0, 2.5)), clamp_byte(base[1] * k + rng.normal(0, 2.5)),
            clamp_byte(base[2] * k + rng.normal(0, 2.5))};
}

void render(const std::vector<Ellipsoid>& parts, const SynthConfig& cfg, Rng& rng, SynthSample& out) {
    const std::size_t n = cfg.image_size;
    const double step = 2 * cfg.view_half_extent / double(n);
    out.top = imaging::RgbImage::filled(n, n);
    out.side = imaging::RgbImage::filled(n, n);
    out.mask_top = imaging::GrayImage::filled(n, n);
    out.mask_side = imaging::GrayImage::filled(n, n);
    out.depth = imaging::DepthImage::filled(n, n);
    const Point3 down{0, 0, -1}, ahead{0, 1, 0};
    for (std::size_t v = 0; v < n; ++v) {
        for (std::size_t u = 0; u < n; ++u) {
            const double x = -cfg.view_half_extent + (double(u) + 0.5) * step;
            const double y = cfg.view_half_extent - (double(v) + 0.5) * step;
            const Point3 o{x, y, 2000};
            const Hit h = cast(parts, o, down);
            if (h.part) {
                const Rgb c = shade(h, o, down, rng);
                for (std::size_t k = 0; k < 3; ++k) out.top.at(u, v, k) = c[k];
                out.mask_top.at(u, v) = 255;
            } else {
                const bool tile = (int(std::floor(x / 100)) + int(std::floor(y / 100))) % 2 == 0;
                const Rgb floor = tile ? Rgb{176, 178, 168} : Rgb{160, 163, 152};
                const Rgb c = jitter(floor, rng, 3);
                for (std::size_t k = 0; k < 3; ++k) out.top.at(u, v, k) = c[k];
            }
        }
    }
    const double z_top = cfg.side_floor_z + 2 * cfg.view_half_extent;
    for (std::size_t v = 0; v < n; ++v) {
        for (std::size_t u = 0; u < n; ++u) {
            const double x = -cfg.view_half_extent + (double(u) + 0.5) * step;
            const double z = z_top - (double(v) + 0.5) * step;
            const Point3 o{x, -cfg.camera_distance, z};
            const Hit h = cast(parts, o, ahead);
            if (h.part) {
                const Rgb c = shade(h, o, ahead, rng);
                for (std::size_t k = 0; k < 3; ++k) out.side.at(u, v, k) = c[k];
                out.mask_side.at(u, v) = 255;
                out.depth.at(u, v) = static_cast<std::uint16_t>(std::lround(h.t));
            } else if (z >= 0) {
                const Rgb c = jitter({206, 204, 196}, rng, 3);
                for (std::size_t k = 0; k < 3; ++k) out.side.at(u, v, k) = c[k];
                out.depth.at(u, v) = static_cast<std::uint16_t>(std::lround(cfg.wall_y + cfg.camera_distance));
            } else {
                const Rgb c = jitter({96, 98, 90}, rng, 3);
                for (std::size_t k = 0; k < 3; ++k) out.side.at(u, v, k) = c[k];
            }
        }
    }
}

// Uniform point on the ellipsoid surface by area-weighted rejection.
Point3 surface_point(const Ellipsoid& e, Rng& rng) {
    const double min_semi = std::min({e.semi.x, e.semi.y, e.semi.z});
    for (;;) {
        Point3 u{rng.normal(), rng.normal(), rng.normal()};
        const double len = u.norm();
        if (len < 1e-12) continue;
        u = u * (1.0 / len);
        const Point3 g{u.x / e.semi.x, u.y / e.semi.y, u.z / e.semi.z};
        if (rng.uniform() * (1.0 / min_semi) > g.norm()) continue;
        return e.center + e.ex * (u.x * e.semi.x) + e.ey * (u.y * e.semi.y) + e.ez * (u.z * e.semi.z);
    }
}

std::vector<std::pair<Point3, Rgb>> sample_surface(const std::vector<Ellipsoid>& parts, double density, Rng& rng) {
    std::vector<std::pair<Point3, Rgb>> out;
    for (std::size_t i = 0; i < parts.size(); ++i) {
        const auto count = static_cast<std::size_t>(std::lround(parts[i].area() * density));
        for (std::size_t k = 0; k < count; ++k) {
            const Point3 p = surface_point(parts[i], rng);
            bool hidden = false;
            for (std::size_t j = 0; j < parts.size() && !hidden; ++j) hidden = j != i && parts[j].contains(p);
            if (!hidden) out.emplace_back(p, jitter(part_color(parts[i].part), rng, 8));
        }
    }
    return out;
}

double uniform_range(Rng& rng, double mid, double rel) { return mid * rng.uniform(1 - rel, 1 + rel); }

void check_range(const char* name, double v, double lo, double hi) {
    if (!(v >= lo && v <= hi)) {
        throw ArgumentError(std::string("duck parameter ") + name + "=" + std::to_string(v) + " outside [" +
                            std::to_string(lo) + ", " + std::to_string(hi) + "]");
    }
}

} // namespace

void DuckShape::validate() const {
    check_range("torso_a", torso_a, 60, 300);
    check_range("torso_b", torso_b, 25, 150);
    check_range("torso_c", torso_c, 25, 150);
    check_range("neck_length", neck_length, 30, 250);
    check_range("neck_radius", neck_radius, 5, 50);
    check_range("head_radius", head_radius, 10, 60);
    check_range("beak_length", beak_length, 15, 120);
    check_range("beak_width", beak_width, 3, 40);
    check_range("beak_height", beak_height, 2, 30);
    check_range("leg_length", leg_length, 20, 200);
    check_range("leg_radius", leg_radius, 2, 20);
    check_range("foot_length", foot_length, 15, 120);
    check_range("foot_width", foot_width, 5, 60);
    check_range("foot_height", foot_height, 2, 20);
    check_range("tail_length", tail_length, 5, 120);
    check_range("density", density, 0.3, 2.0);
    for (double n : label_noise) check_range("label_noise", n, 0.8, 1.2);
    if (neck_radius >= head_radius) throw ArgumentError("neck radius must be below head radius");
    if (leg_radius * 2 >= torso_b) throw ArgumentError("legs are wider than the torso");
}

nlohmann::json DuckShape::to_json() const {
    return {{"torso_a", torso_a},         {"torso_b", torso_b},         {"torso_c", torso_c},
            {"neck_length", neck_length}, {"neck_radius", neck_radius}, {"head_radius", head_radius},
            {"beak_length", beak_length}, {"beak_width", beak_width},   {"beak_height", beak_height},
            {"leg_length", leg_length},   {"leg_radius", leg_radius},   {"foot_length", foot_length},
            {"foot_width", foot_width},   {"foot_height", foot_height}, {"tail_length", tail_length},
            {"density", density},         {"label_noise", label_noise}};
}

nlohmann::json Pose::to_json() const { return {{"yaw", yaw}, {"neck_bend", neck_bend}, {"tx", tx}, {"ty", ty}}; }

DuckShape sample_shape(Rng& rng) {
    DuckShape s;
    const double k = rng.uniform(0.88, 1.12);
    s.torso_a = uniform_range(rng, 140 * k, 0.06);
    s.torso_b = uniform_range(rng, 64 * k, 0.08);
    s.torso_c = uniform_range(rng, 58 * k, 0.08);
    s.neck_length = uniform_range(rng, 105 * k, 0.12);
    s.neck_radius = uniform_range(rng, 19 * k, 0.08);
    s.head_radius = uniform_range(rng, 26 * k, 0.07);
    s.beak_length = uniform_range(rng, 52 * k, 0.1);
    s.beak_width = 13 * k;
    s.beak_height = 7 * k;
    s.leg_length = uniform_range(rng, 75 * k, 0.12);
    s.leg_radius = 6 * k;
    s.foot_length = uniform_range(rng, 55 * k, 0.08);
    s.foot_width = 22 * k;
    s.foot_height = 6 * k;
    s.tail_length = uniform_range(rng, 35 * k, 0.15);
    s.density = rng.uniform(0.8, 0.9);
    for (std::size_t i = 0; i < s.label_noise.size(); ++i)
        s.label_noise[i] = std::clamp(rng.normal(1.0, i == 0 ? 0.02 : 0.01), 0.9, 1.1);
    return s;
}

Pose sample_pose(Rng& rng) {
    Pose p;
    p.yaw = rng.uniform(-15, 15) * kPi / 180;
    p.neck_bend = rng.uniform(-0.25, 0.25);
    p.tx = rng.uniform(-40, 40);
    p.ty = rng.uniform(-40, 40);
    return p;
}

geomfeat::KeypointSet keypoints(const DuckShape& shape, const Pose& pose) {
    shape.validate();
    return posed_body(shape, pose).keys;
}

dataset::Labels labels(const DuckShape& s) {
    s.validate();
    const Body b = build_body(s, 0.0);
    const auto& k = b.keys;
    const double torso = 4.0 / 3.0 * kPi * s.torso_a * s.torso_b * s.torso_c;
    const double neck = kPi * s.neck_radius * s.neck_radius * s.neck_length;
    const double head = 4.0 / 3.0 * kPi * 1.15 * 0.85 * std::pow(s.head_radius, 3);
    double arc = 0;
    Point3 prev = b.neck_base;
    for (int i = 1; i <= 64; ++i) {
        const Point3 p = bezier(b.neck_base, b.neck_ctrl, b.head_center, i / 64.0);
        arc += geomfeat::distance(prev, p);
        prev = p;
    }
    dataset::Labels l{
        s.density * (torso + neck + head) / 1000.0,
        geomfeat::distance(k[0], k[4]) / 10.0,
        arc / 10.0,
        geomfeat::distance(k[0], b.hip_mid) / 10.0,
        1.45 * s.torso_a / 10.0,
        2 * s.torso_b / 10.0,
        2 * s.torso_c / 10.0,
        geomfeat::distance(k[5], k[6]) / 10.0,
    };
    for (std::size_t i = 0; i < l.size(); ++i) l[i] *= s.label_noise[i];
    return l;
}

SynthSample synth_duck(const DuckShape& shape, const Pose& pose, std::uint64_t seed, const SynthConfig& cfg) {
    shape.validate();
    if (std::abs(pose.yaw) > kPi || std::abs(pose.neck_bend) > 0.6) throw ArgumentError("pose angles out of range");
    const Body body = posed_body(shape, pose);
    Rng rng(seed);
    SynthSample out;
    out.keypoints = body.keys;
    out.labels = labels(shape);

    double density = cfg.points_per_mm2;
    auto surface = sample_surface(body.parts, density, rng);
    while (surface.size() < cfg.min_points) {
        density *= 1.05 * double(cfg.min_points) / double(surface.size());
        surface = sample_surface(body.parts, density, rng);
    }

    Point3 lo = surface[0].first, hi = lo;
    for (const auto& [p, c] : surface) {
        lo = {std::min(lo.x, p.x), std::min(lo.y, p.y), std::min(lo.z, p.z)};
        hi = {std::max(hi.x, p.x), std::max(hi.y, p.y), std::max(hi.z, p.z)};
    }
    struct Tagged {
        Point3 p;
        Rgb c;
        bool outlier;
    };
    std::vector<Tagged> all;
    all.reserve(surface.size() + cfg.debris_points + 1000);
    for (const auto& [p, c] : surface) {
        const Point3 noisy{p.x + rng.normal(0, cfg.noise_sigma), p.y + rng.normal(0, cfg.noise_sigma),
                           p.z + rng.normal(0, cfg.noise_sigma)};
        all.push_back({noisy, c, false});
    }
    const auto n_out = static_cast<std::size_t>(std::lround(cfg.outlier_fraction * double(surface.size())));
    for (std::size_t i = 0; i < n_out; ++i) {
        const Point3 p{rng.uniform(lo.x - 100, hi.x + 100), rng.uniform(lo.y - 100, hi.y + 100),
                       rng.uniform(0, hi.z + 100)};
        all.push_back({p, {std::uint8_t(rng.below(256)), std::uint8_t(rng.below(256)), std::uint8_t(rng.below(256))}, true});
    }
    // A small upright panel near the duck, standing in for pen furniture.
    for (std::size_t i = 0; i < cfg.debris_points; ++i) {
        const Point3 p{hi.x + 150 + rng.normal(0, 0.5), rng.uniform(-60, 60) + pose.ty, rng.uniform(0, 100)};
        all.push_back({p, jitter({120, 120, 125}, rng, 5), true});
    }
    rng.shuffle(all.begin(), all.end());
    out.cloud.points.reserve(all.size());
    out.cloud.colors.reserve(all.size());
    for (std::size_t i = 0; i < all.size(); ++i) {
        out.cloud.points.push_back(all[i].p);
        out.cloud.colors.push_back(all[i].c);
        if (all[i].outlier) out.outliers.push_back(i);
    }

    render(body.parts, cfg, rng, out);
    return out;
}

dataset::Manifest write_dataset(const std::filesystem::path& root, const DatasetSpec& spec) {
    if (spec.ducks == 0 || spec.poses == 0) throw ArgumentError("need at least one duck and one pose");
    std::size_t written = 0;
    for (std::size_t d = spec.first_duck; d < spec.first_duck + spec.ducks; ++d) {
        const std::uint64_t duck_seed = derive_seed(spec.seed, d);
        Rng duck_rng(duck_seed);
        const DuckShape shape = sample_shape(duck_rng);
        char duck_id[32];
        std::snprintf(duck_id, sizeof duck_id, "duck_%04zu", d);
        for (std::size_t p = 0; p < spec.poses; ++p) {
            const std::uint64_t pose_seed = derive_seed(duck_seed, p + 1);
            Rng pose_rng(pose_seed);
            const Pose pose = sample_pose(pose_rng);
            const auto sample = synth_duck(shape, pose, derive_seed(pose_seed, 0), spec.render);
            const std::string sample_id = std::string(duck_id) + "_p" + std::to_string(p + 1);
            const auto dir = root / "data" / duck_id / sample_id;
            codecs::save_ply(dir / "cloud.ply", sample.cloud);
            codecs::save_ppm(dir / "top.ppm", sample.top);
            codecs::save_ppm(dir / "side.ppm", sample.side);
            codecs::save_pgm16(dir / "depth.pgm", sample.depth);
            codecs::save_pgm(dir / "mask_top.pgm", sample.mask_top);
            codecs::save_pgm(dir / "mask_side.pgm", sample.mask_side);
            codecs::write_file_atomic(dir / "labels.json", dataset::labels_to_json(sample.labels).dump(2) + "\n");
            if (written < spec.annotate) {
                const dataset::Annotation a{sample_id, sample.keypoints, "synthetic-ground-truth",
                                            "1970-01-01T00:00:00Z"};
                codecs::write_file_atomic(dir / "annotation.json", dataset::annotation_to_json(a).dump(2) + "\n");
            }
            nlohmann::json truth = {{"shape", shape.to_json()},
                                    {"pose", pose.to_json()},
                                    {"keypoints", dataset::annotation_to_json({sample_id, sample.keypoints, "", ""})["points"]},
                                    {"outliers", sample.outliers}};
            codecs::write_file_atomic(dir / "truth.json", truth.dump() + "\n");
            ++written;
        }
    }
    auto manifest = dataset::build_manifest(root);
    dataset::save_manifest(root, manifest);
    return manifest;
}

} // namespace duckmorph::synth

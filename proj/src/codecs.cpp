#include "duckmorph/codecs.hpp"

#include <cctype>
#include <cerrno>
#include <cmath>
#include <charconv>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iterator>
#include <sstream>
#include <vector>

#include "duckmorph/errors.hpp"

namespace duckmorph::codecs {

std::string read_file(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open " + path.string());
    return std::string((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
}

void write_file_atomic(const std::filesystem::path& path, std::string_view bytes) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    const auto tmp = path.string() + ".tmp";
    {
        std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
        if (!os) throw IoError("cannot write " + tmp);
        os.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
        if (!os) throw IoError("short write on " + tmp);
    }
    std::filesystem::rename(tmp, path);
}

namespace {

// Line cursor over a byte buffer that remembers offsets and line numbers.
class LineReader {
public:
    explicit LineReader(std::string_view s) : s_(s) {}

    bool next(std::string_view& line) {
        if (pos_ >= s_.size()) return false;
        line_start_ = pos_;
        const auto nl = s_.find('\n', pos_);
        const std::size_t end = nl == std::string_view::npos ? s_.size() : nl;
        line = s_.substr(pos_, end - pos_);
        if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
        pos_ = nl == std::string_view::npos ? s_.size() : nl + 1;
        ++line_no_;
        return true;
    }

    std::size_t line_start() const { return line_start_; }
    std::size_t line_no() const { return line_no_; }

private:
    std::string_view s_;
    std::size_t pos_ = 0;
    std::size_t line_start_ = 0;
    std::size_t line_no_ = 0;
};

std::vector<std::string_view> split_ws(std::string_view line) {
    std::vector<std::string_view> out;
    std::size_t i = 0;
    while (i < line.size()) {
        while (i < line.size() && (line[i] == ' ' || line[i] == '\t')) ++i;
        const std::size_t b = i;
        while (i < line.size() && line[i] != ' ' && line[i] != '\t') ++i;
        if (i > b) out.push_back(line.substr(b, i - b));
    }
    return out;
}

bool parse_double(std::string_view tok, double& out) {
    std::string buf(tok);
    char* end = nullptr;
    errno = 0;
    out = std::strtod(buf.c_str(), &end);
    return end == buf.c_str() + buf.size() && errno == 0 && !buf.empty();
}

} // namespace

PointCloud parse_ply(std::string_view bytes, double unit_scale) {
    LineReader rd(bytes);
    std::string_view line;
    auto fail = [&](const std::string& msg) -> ParseError {
        return ParseError("PLY line " + std::to_string(rd.line_no()) + " ('" + std::string(line.substr(0, 60)) +
                              "'): " + msg,
                          rd.line_start());
    };
    if (!rd.next(line) || line != "ply") throw fail("missing 'ply' magic");
    if (!rd.next(line) || split_ws(line) != std::vector<std::string_view>{"format", "ascii", "1.0"}) {
        throw fail("only 'format ascii 1.0' is supported");
    }
    std::size_t count = 0;
    bool saw_vertex = false, in_vertex = false;
    std::vector<std::string> props;
    bool ended = false;
    while (rd.next(line)) {
        const auto tok = split_ws(line);
        if (tok.empty()) continue;
        if (tok[0] == "comment" || tok[0] == "obj_info") continue;
        if (tok[0] == "end_header") {
            ended = true;
            break;
        }
        if (tok[0] == "element") {
            if (tok.size() != 3) throw fail("malformed element line");
            if (tok[1] != "vertex") throw fail("unsupported element '" + std::string(tok[1]) + "'");
            if (saw_vertex) throw fail("duplicate vertex element");
            const auto r = std::from_chars(tok[2].data(), tok[2].data() + tok[2].size(), count);
            if (r.ec != std::errc() || r.ptr != tok[2].data() + tok[2].size()) throw fail("bad vertex count");
            saw_vertex = in_vertex = true;
            continue;
        }
        if (tok[0] == "property") {
            if (!in_vertex) throw fail("property outside the vertex element");
            if (tok.size() != 3) throw fail("malformed or list property");
            const std::string type(tok[1]), name(tok[2]);
            const bool is_coord = name == "x" || name == "y" || name == "z";
            const bool is_color = name == "red" || name == "green" || name == "blue" || name == "r" ||
                                  name == "g" || name == "b";
            if (is_coord && type != "float" && type != "float32" && type != "double" && type != "float64") {
                throw fail("coordinate '" + name + "' must be float or double");
            }
            if (is_color && type != "uchar" && type != "uint8") throw fail("color '" + name + "' must be uchar");
            if (!is_coord && !is_color) throw fail("unsupported vertex property '" + name + "'");
            props.push_back(name.size() == 1 && is_color ? (name == "r" ? "red" : name == "g" ? "green" : "blue")
                                                         : name);
            continue;
        }
        throw fail("unrecognized header line");
    }
    if (!ended) throw ParseError("PLY header has no end_header", bytes.size());
    if (!saw_vertex) throw ParseError("PLY header declares no vertex element", rd.line_start());
    const std::vector<std::string> xyz{"x", "y", "z"}, xyzrgb{"x", "y", "z", "red", "green", "blue"};
    if (props != xyz && props != xyzrgb) {
        throw ParseError("PLY vertex properties must be x y z [red green blue] in that order", rd.line_start());
    }
    const bool colored = props.size() == 6;

    PointCloud cloud;
    cloud.points.reserve(count);
    if (colored) cloud.colors.reserve(count);
    for (std::size_t i = 0; i < count; ++i) {
        do {
            if (!rd.next(line)) {
                throw ParseError("PLY body truncated: expected " + std::to_string(count) + " vertices, got " +
                                     std::to_string(i),
                                 bytes.size());
            }
        } while (split_ws(line).empty());
        const auto tok = split_ws(line);
        if (tok.size() != props.size()) throw fail("expected " + std::to_string(props.size()) + " values");
        double v[6];
        for (std::size_t c = 0; c < tok.size(); ++c) {
            if (!parse_double(tok[c], v[c])) throw fail("bad number '" + std::string(tok[c]) + "'");
        }
        Point3 p{v[0] * unit_scale, v[1] * unit_scale, v[2] * unit_scale};
        if (!p.finite()) throw fail("non-finite coordinate");
        cloud.points.push_back(p);
        if (colored) {
            Rgb c{};
            for (int k = 0; k < 3; ++k) {
                if (v[3 + k] < 0 || v[3 + k] > 255 || v[3 + k] != std::floor(v[3 + k])) throw fail("bad color value");
                c[k] = static_cast<std::uint8_t>(v[3 + k]);
            }
            cloud.colors.push_back(c);
        }
    }
    return cloud;
}

std::string format_ply(const PointCloud& cloud) {
    std::string out = "ply\nformat ascii 1.0\ncomment units millimeters\nelement vertex " +
                      std::to_string(cloud.size()) + "\nproperty float x\nproperty float y\nproperty float z\n";
    if (cloud.has_colors()) out += "property uchar red\nproperty uchar green\nproperty uchar blue\n";
    out += "end_header\n";
    out.reserve(out.size() + cloud.size() * 40);
    char buf[128];
    for (std::size_t i = 0; i < cloud.size(); ++i) {
        const auto& p = cloud.points[i];
        int n = std::snprintf(buf, sizeof buf, "%.9g %.9g %.9g", p.x, p.y, p.z);
        out.append(buf, static_cast<std::size_t>(n));
        if (cloud.has_colors()) {
            const auto& c = cloud.colors[i];
            n = std::snprintf(buf, sizeof buf, " %u %u %u", c[0], c[1], c[2]);
            out.append(buf, static_cast<std::size_t>(n));
        }
        out.push_back('\n');
    }
    return out;
}

PointCloud load_ply(const std::filesystem::path& path, double unit_scale) {
    try {
        return parse_ply(read_file(path), unit_scale);
    } catch (const ParseError& e) {
        throw ParseError(path.string() + ": " + e.what(), e.byte_offset());
    }
}

void save_ply(const std::filesystem::path& path, const PointCloud& cloud) {
    write_file_atomic(path, format_ply(cloud));
}

namespace {

struct PnmHeader {
    char kind;
    std::size_t width, height, maxval, data_offset;
};

PnmHeader parse_pnm_header(std::string_view s) {
    if (s.size() < 2 || s[0] != 'P' || (s[1] != '5' && s[1] != '6')) {
        throw ParseError("not a binary PNM file (expected P5 or P6)", 0);
    }
    std::size_t pos = 2;
    std::size_t fields[3];
    for (auto& field : fields) {
        // whitespace and comments
        for (;;) {
            while (pos < s.size() && std::isspace(static_cast<unsigned char>(s[pos]))) ++pos;
            if (pos < s.size() && s[pos] == '#') {
                while (pos < s.size() && s[pos] != '\n') ++pos;
                continue;
            }
            break;
        }
        if (pos >= s.size()) throw ParseError("PNM header truncated", pos);
        const auto r = std::from_chars(s.data() + pos, s.data() + s.size(), field);
        if (r.ec != std::errc()) throw ParseError("PNM header field is not a number", pos);
        pos = static_cast<std::size_t>(r.ptr - s.data());
    }
    if (pos >= s.size() || !std::isspace(static_cast<unsigned char>(s[pos]))) {
        throw ParseError("PNM header must end with one whitespace byte", pos);
    }
    ++pos;
    if (fields[0] == 0 || fields[1] == 0) throw ParseError("PNM image has a zero dimension", 2);
    if (fields[2] == 0 || fields[2] > 65535) throw ParseError("PNM maxval out of range", 2);
    return {s[1], fields[0], fields[1], fields[2], pos};
}

void require_payload(std::string_view s, const PnmHeader& h, std::size_t bytes) {
    if (s.size() - h.data_offset < bytes) {
        throw ParseError("PNM payload truncated: need " + std::to_string(bytes) + " bytes, have " +
                             std::to_string(s.size() - h.data_offset),
                         s.size());
    }
}

template <std::size_t C>
imaging::Raster<std::uint8_t, C> parse_pnm8(std::string_view s, char kind) {
    const auto h = parse_pnm_header(s);
    if (h.kind != kind) throw ParseError(std::string("expected P") + kind + " file", 1);
    if (h.maxval > 255) throw ParseError("expected an 8-bit PNM (maxval <= 255)", 2);
    const std::size_t n = h.width * h.height * C;
    require_payload(s, h, n);
    auto img = imaging::Raster<std::uint8_t, C>::filled(h.width, h.height);
    std::copy(s.begin() + static_cast<long>(h.data_offset), s.begin() + static_cast<long>(h.data_offset + n),
              img.data.begin());
    return img;
}

template <std::size_t C>
std::string format_pnm8(const imaging::Raster<std::uint8_t, C>& img, char kind) {
    if (img.data.size() != img.width * img.height * C) throw DimensionError("raster size mismatch");
    std::string out = std::string("P") + kind + "\n" + std::to_string(img.width) + " " +
                      std::to_string(img.height) + "\n255\n";
    out.append(reinterpret_cast<const char*>(img.data.data()), img.data.size());
    return out;
}

} // namespace

imaging::GrayImage parse_pgm(std::string_view bytes) { return parse_pnm8<1>(bytes, '5'); }
imaging::RgbImage parse_ppm(std::string_view bytes) { return parse_pnm8<3>(bytes, '6'); }

imaging::DepthImage parse_pgm16(std::string_view s) {
    const auto h = parse_pnm_header(s);
    if (h.kind != '5') throw ParseError("expected P5 file", 1);
    auto img = imaging::DepthImage::filled(h.width, h.height);
    if (h.maxval <= 255) {
        require_payload(s, h, img.data.size());
        for (std::size_t i = 0; i < img.data.size(); ++i)
            img.data[i] = static_cast<unsigned char>(s[h.data_offset + i]);
        return img;
    }
    require_payload(s, h, img.data.size() * 2);
    for (std::size_t i = 0; i < img.data.size(); ++i) {
        const auto hi = static_cast<unsigned char>(s[h.data_offset + 2 * i]);
        const auto lo = static_cast<unsigned char>(s[h.data_offset + 2 * i + 1]);
        img.data[i] = static_cast<std::uint16_t>((hi << 8) | lo);
    }
    return img;
}

std::string format_pgm(const imaging::GrayImage& img) { return format_pnm8(img, '5'); }
std::string format_ppm(const imaging::RgbImage& img) { return format_pnm8(img, '6'); }

std::string format_pgm16(const imaging::DepthImage& img) {
    std::string out = "P5\n" + std::to_string(img.width) + " " + std::to_string(img.height) + "\n65535\n";
    out.reserve(out.size() + img.data.size() * 2);
    for (auto v : img.data) {
        out.push_back(static_cast<char>(v >> 8));
        out.push_back(static_cast<char>(v & 0xFF));
    }
    return out;
}

namespace {
template <typename F>
auto with_path(const std::filesystem::path& path, F&& parse) {
    try {
        return parse(read_file(path));
    } catch (const ParseError& e) {
        throw ParseError(path.string() + ": " + e.what(), e.byte_offset());
    }
}
} // namespace

imaging::GrayImage load_pgm(const std::filesystem::path& p) {
    return with_path(p, [](const std::string& s) { return parse_pgm(s); });
}
imaging::DepthImage load_pgm16(const std::filesystem::path& p) {
    return with_path(p, [](const std::string& s) { return parse_pgm16(s); });
}
imaging::RgbImage load_ppm(const std::filesystem::path& p) {
    return with_path(p, [](const std::string& s) { return parse_ppm(s); });
}
void save_pgm(const std::filesystem::path& p, const imaging::GrayImage& img) { write_file_atomic(p, format_pgm(img)); }
void save_pgm16(const std::filesystem::path& p, const imaging::DepthImage& img) {
    write_file_atomic(p, format_pgm16(img));
}
void save_ppm(const std::filesystem::path& p, const imaging::RgbImage& img) { write_file_atomic(p, format_ppm(img)); }

} // namespace duckmorph::codecs

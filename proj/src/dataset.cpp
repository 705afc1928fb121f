#include "cprl/dataset.hpp"

#include <algorithm>
#include <cerrno>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "cprl/rng.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace cprl {

namespace {

constexpr double kPi = 3.14159265358979323846;

struct TypeSpec {
    const char* name;
    double kappa;  // label decay rate
};
constexpr TypeSpec kTypes[] = {{"blur", 0.5}, {"noise", 0.4}, {"quant", 0.3}};

double decay_label(std::size_t level, std::size_t levels, double kappa) {
    const double top = std::exp(-kappa * static_cast<double>(level));
    const double floor = std::exp(-kappa * static_cast<double>(levels));
    return (top - floor) / (1.0 - floor);
}

void normalize_01(std::vector<double>& img) {
    auto [lo_it, hi_it] = std::minmax_element(img.begin(), img.end());
    const double lo = *lo_it, hi = *hi_it;
    if (hi - lo < 1e-12) {
        std::fill(img.begin(), img.end(), 0.5);
        return;
    }
    for (auto& v : img) v = (v - lo) / (hi - lo);
}

std::vector<double> gradient_plane(std::size_t h, std::size_t w, Rng& rng) {
    const double theta = rng.uniform(0.0, 2.0 * kPi);
    const double cx = std::cos(theta), cy = std::sin(theta);
    const double amp = (std::abs(cx) + std::abs(cy)) / 2.0;
    std::vector<double> img(h * w);
    for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < w; ++x) {
            const double xn = static_cast<double>(x) / static_cast<double>(w - 1) - 0.5;
            const double yn = static_cast<double>(y) / static_cast<double>(h - 1) - 0.5;
            img[y * w + x] = (cx * xn + cy * yn) / (2.0 * amp) + 0.5;
        }
    return img;
}

std::vector<double> checker_plane(std::size_t h, std::size_t w, Rng& rng) {
    const std::size_t cell = std::size_t{2} << rng.below(3);  // 2, 4 or 8
    const std::size_t ox = rng.below(cell), oy = rng.below(cell);
    std::vector<double> img(h * w);
    for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < w; ++x)
            img[y * w + x] = static_cast<double>(((x + ox) / cell + (y + oy) / cell) % 2);
    return img;
}

void gaussian_blur(std::vector<double>& img, std::size_t h, std::size_t w, double sigma) {
    const int radius = std::max(1, static_cast<int>(std::ceil(3.0 * sigma)));
    std::vector<double> kernel(2 * radius + 1);
    double norm = 0.0;
    for (int i = -radius; i <= radius; ++i) {
        kernel[i + radius] = std::exp(-0.5 * (i / sigma) * (i / sigma));
        norm += kernel[i + radius];
    }
    for (auto& k : kernel) k /= norm;

    const auto clampi = [](long v, long n) { return std::clamp(v, 0L, n - 1); };
    std::vector<double> tmp(h * w);
    for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < w; ++x) {
            double acc = 0.0;
            for (int i = -radius; i <= radius; ++i)
                acc += kernel[i + radius] *
                       img[y * w + clampi(static_cast<long>(x) + i, static_cast<long>(w))];
            tmp[y * w + x] = acc;
        }
    for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < w; ++x) {
            double acc = 0.0;
            for (int i = -radius; i <= radius; ++i)
                acc += kernel[i + radius] *
                       tmp[clampi(static_cast<long>(y) + i, static_cast<long>(h)) * w + x];
            img[y * w + x] = acc;
        }
}

std::vector<double> noise_plane(std::size_t h, std::size_t w, Rng& rng) {
    std::vector<double> img(h * w);
    for (auto& v : img) v = rng.uniform();
    gaussian_blur(img, h, w, rng.uniform(0.8, 2.0));
    normalize_01(img);
    return img;
}

std::vector<double> make_scene(std::size_t h, std::size_t w, Rng& rng) {
    const auto g = gradient_plane(h, w, rng);
    const auto c = checker_plane(h, w, rng);
    const auto n = noise_plane(h, w, rng);
    // floor of 0.2 keeps every component present so blur has texture to erase
    double wg = 0.2 + rng.uniform(), wc = 0.2 + rng.uniform(), wn = 0.2 + rng.uniform();
    const double total = wg + wc + wn;
    wg /= total;
    wc /= total;
    wn /= total;
    std::vector<double> img(h * w);
    for (std::size_t i = 0; i < img.size(); ++i) img[i] = wg * g[i] + wc * c[i] + wn * n[i];
    normalize_01(img);
    return img;
}

std::vector<double> distort(const std::vector<double>& ref, std::size_t h, std::size_t w,
                            const std::string& type, std::size_t level, Rng& rng) {
    std::vector<double> img = ref;
    if (type == "blur") {
        gaussian_blur(img, h, w, 0.5 * static_cast<double>(level));
    } else if (type == "noise") {
        const double sigma = 0.03 * static_cast<double>(level);
        for (auto& v : img) v = std::clamp(v + sigma * rng.normal(), 0.0, 1.0);
    } else if (type == "quant") {
        const std::size_t bins = std::max<std::size_t>(2, std::size_t{128} >> level);
        const double steps = static_cast<double>(bins - 1);
        for (auto& v : img) v = std::round(v * steps) / steps;
    } else {
        throw std::invalid_argument("distort: unknown type " + type);
    }
    return img;
}

std::string blob_name(std::size_t index) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%06zu.f64", index);
    return buf;
}

std::string fmt_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

// Bilinear cover-resize followed by a center crop; pass-through when sizes
// already match so archive round-trips stay bit-exact.
std::vector<double> resize_crop(const std::vector<double>& img, std::size_t c, std::size_t h,
                                std::size_t w, std::size_t th, std::size_t tw) {
    if (h == th && w == tw) return img;
    const double scale = std::max(static_cast<double>(th) / static_cast<double>(h),
                                  static_cast<double>(tw) / static_cast<double>(w));
    const std::size_t rh = std::max<std::size_t>(th, static_cast<std::size_t>(std::lround(h * scale)));
    const std::size_t rw = std::max<std::size_t>(tw, static_cast<std::size_t>(std::lround(w * scale)));
    std::vector<double> out(c * th * tw);
    const std::size_t oy = (rh - th) / 2, ox = (rw - tw) / 2;
    for (std::size_t ch = 0; ch < c; ++ch) {
        const double* src = img.data() + ch * h * w;
        double* dst = out.data() + ch * th * tw;
        for (std::size_t y = 0; y < th; ++y)
            for (std::size_t x = 0; x < tw; ++x) {
                const double sy = (static_cast<double>(y + oy) + 0.5) * static_cast<double>(h) /
                                      static_cast<double>(rh) - 0.5;
                const double sx = (static_cast<double>(x + ox) + 0.5) * static_cast<double>(w) /
                                      static_cast<double>(rw) - 0.5;
                const double cy = std::clamp(sy, 0.0, static_cast<double>(h - 1));
                const double cx = std::clamp(sx, 0.0, static_cast<double>(w - 1));
                const std::size_t y0 = static_cast<std::size_t>(cy);
                const std::size_t x0 = static_cast<std::size_t>(cx);
                const std::size_t y1 = std::min(y0 + 1, h - 1), x1 = std::min(x0 + 1, w - 1);
                const double fy = cy - static_cast<double>(y0), fx = cx - static_cast<double>(x0);
                dst[y * tw + x] = (1 - fy) * ((1 - fx) * src[y0 * w + x0] + fx * src[y0 * w + x1]) +
                                  fy * ((1 - fx) * src[y1 * w + x0] + fx * src[y1 * w + x1]);
            }
    }
    return out;
}

[[noreturn]] void manifest_error(std::size_t line_no, const std::string& what) {
    throw std::runtime_error("manifest.csv line " + std::to_string(line_no) + ": " + what);
}

}  // namespace

Dataset generate(std::size_t scene_count, std::size_t levels, std::uint64_t seed,
                 std::size_t side) {
    if (scene_count < 5) throw std::invalid_argument("generate: scene_count must be >= 5");
    if (levels < 3) throw std::invalid_argument("generate: levels must be >= 3");
    if (side < 8) throw std::invalid_argument("generate: side must be >= 8");

    Dataset ds;
    ds.channels = 1;
    ds.height = side;
    ds.width = side;
    ds.samples.reserve(scene_count * (1 + 3 * levels));
    for (std::size_t scene = 0; scene < scene_count; ++scene) {
        Rng rng(mix_seed(seed, scene));
        const auto ref = make_scene(side, side, rng);
        ds.samples.push_back({ref, 1.0, scene, "none", 0});
        for (const auto& type : kTypes)
            for (std::size_t level = 1; level <= levels; ++level)
                ds.samples.push_back({distort(ref, side, side, type.name, level, rng),
                                      decay_label(level, levels, type.kappa), scene, type.name,
                                      level});
    }
    return ds;
}

SplitSpec make_split(const Dataset& ds, std::uint64_t seed) {
    std::set<std::size_t> ids;
    for (const auto& s : ds.samples) ids.insert(s.scene_id);
    if (ids.size() < 5) throw std::invalid_argument("make_split: need at least 5 scenes");

    std::vector<std::size_t> scenes(ids.begin(), ids.end());
    Rng rng(mix_seed(seed, 0x5917));
    rng.shuffle(scenes);
    const std::size_t n_test =
        std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(scenes.size() / 5.0)));

    SplitSpec spec;
    spec.seed = seed;
    spec.test_scenes.assign(scenes.begin(), scenes.begin() + n_test);
    spec.train_scenes.assign(scenes.begin() + n_test, scenes.end());
    std::sort(spec.test_scenes.begin(), spec.test_scenes.end());
    std::sort(spec.train_scenes.begin(), spec.train_scenes.end());
    return spec;
}

std::pair<Dataset, Dataset> apply_split(const Dataset& ds, const SplitSpec& spec) {
    const std::set<std::size_t> train(spec.train_scenes.begin(), spec.train_scenes.end());
    const std::set<std::size_t> test(spec.test_scenes.begin(), spec.test_scenes.end());
    for (std::size_t id : train)
        if (test.count(id))
            throw std::invalid_argument("apply_split: scene " + std::to_string(id) +
                                        " appears in both splits");
    Dataset tr = ds, te = ds;
    tr.samples.clear();
    te.samples.clear();
    for (const auto& s : ds.samples) {
        if (train.count(s.scene_id)) tr.samples.push_back(s);
        else if (test.count(s.scene_id)) te.samples.push_back(s);
        else
            throw std::invalid_argument("apply_split: scene " + std::to_string(s.scene_id) +
                                        " missing from the split spec");
    }
    return {std::move(tr), std::move(te)};
}

void save_split(const std::string& path, const SplitSpec& spec) {
    json j;
    j["seed"] = spec.seed;
    j["train_scenes"] = spec.train_scenes;
    j["test_scenes"] = spec.test_scenes;
    std::ofstream os(path, std::ios::trunc);
    if (!os) throw std::runtime_error("save_split: cannot open " + path);
    os << j.dump(2) << "\n";
}

SplitSpec load_split(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("load_split: cannot open " + path);
    json j;
    try {
        is >> j;
    } catch (const json::exception& e) {
        throw std::runtime_error("load_split: " + path + ": " + e.what());
    }
    SplitSpec spec;
    spec.seed = j.at("seed").get<std::uint64_t>();
    spec.train_scenes = j.at("train_scenes").get<std::vector<std::size_t>>();
    spec.test_scenes = j.at("test_scenes").get<std::vector<std::size_t>>();
    return spec;
}

void export_archive(const Dataset& ds, const std::string& dir) {
    fs::create_directories(dir);
    json meta;
    meta["channels"] = ds.channels;
    meta["height"] = ds.height;
    meta["width"] = ds.width;
    meta["count"] = ds.samples.size();
    {
        std::ofstream os(fs::path(dir) / "meta.json", std::ios::trunc);
        if (!os) throw std::runtime_error("export_archive: cannot write meta.json in " + dir);
        os << meta.dump(2) << "\n";
    }
    std::ofstream manifest(fs::path(dir) / "manifest.csv", std::ios::trunc);
    if (!manifest) throw std::runtime_error("export_archive: cannot write manifest.csv in " + dir);
    manifest << "filename,label,scene_id\n";
    for (std::size_t i = 0; i < ds.samples.size(); ++i) {
        const auto& s = ds.samples[i];
        const std::string name = blob_name(i);
        manifest << name << "," << fmt_double(s.label) << "," << s.scene_id << "\n";
        std::ofstream blob(fs::path(dir) / name, std::ios::binary | std::ios::trunc);
        if (!blob) throw std::runtime_error("export_archive: cannot write " + name);
        blob.write(reinterpret_cast<const char*>(s.image.data()),
                   static_cast<std::streamsize>(s.image.size() * sizeof(double)));
    }
}

Dataset ingest(const std::string& dir, std::size_t target_h, std::size_t target_w) {
    json meta;
    {
        std::ifstream is(fs::path(dir) / "meta.json");
        if (!is) throw std::runtime_error("ingest: missing meta.json in " + dir);
        try {
            is >> meta;
        } catch (const json::exception& e) {
            throw std::runtime_error(std::string("ingest: meta.json: ") + e.what());
        }
    }
    std::size_t c, h, w;
    try {
        c = meta.at("channels").get<std::size_t>();
        h = meta.at("height").get<std::size_t>();
        w = meta.at("width").get<std::size_t>();
    } catch (const json::exception& e) {
        throw std::runtime_error(std::string("ingest: meta.json: ") + e.what());
    }
    const bool declared = meta.contains("label_min") || meta.contains("label_max");
    double lo = 0.0, hi = 0.0;
    if (declared) {
        if (!meta.contains("label_min") || !meta.contains("label_max"))
            throw std::runtime_error("ingest: meta.json declares only one label bound");
        lo = meta.at("label_min").get<double>();
        hi = meta.at("label_max").get<double>();
    }

    std::ifstream manifest(fs::path(dir) / "manifest.csv");
    if (!manifest) throw std::runtime_error("ingest: missing manifest.csv in " + dir);

    Dataset ds;
    ds.channels = c;
    ds.height = target_h;
    ds.width = target_w;

    std::string line;
    std::size_t line_no = 0;
    bool saw_header = false;
    while (std::getline(manifest, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        if (!saw_header) {
            if (line != "filename,label,scene_id")
                manifest_error(line_no, "expected header filename,label,scene_id");
            saw_header = true;
            continue;
        }
        std::stringstream ss(line);
        std::string fname, label_str, scene_str, extra;
        if (!std::getline(ss, fname, ',') || !std::getline(ss, label_str, ',') ||
            !std::getline(ss, scene_str, ','))
            manifest_error(line_no, "expected 3 comma-separated fields");
        if (std::getline(ss, extra, ',')) manifest_error(line_no, "trailing fields");

        char* end = nullptr;
        const double label = std::strtod(label_str.c_str(), &end);
        if (end == label_str.c_str() || *end != '\0' || !std::isfinite(label))
            manifest_error(line_no, "bad label '" + label_str + "'");
        if (declared && (label < lo || label > hi))
            manifest_error(line_no, "label " + label_str + " outside declared range");
        errno = 0;
        const unsigned long long scene = std::strtoull(scene_str.c_str(), &end, 10);
        if (end == scene_str.c_str() || *end != '\0' || errno == ERANGE)
            manifest_error(line_no, "bad scene_id '" + scene_str + "'");

        std::ifstream blob(fs::path(dir) / fname, std::ios::binary);
        if (!blob) manifest_error(line_no, "missing image file " + fname);
        std::vector<double> raw(c * h * w);
        if (!blob.read(reinterpret_cast<char*>(raw.data()),
                       static_cast<std::streamsize>(raw.size() * sizeof(double))) ||
            blob.peek() != EOF)
            manifest_error(line_no, fname + " is not " + std::to_string(raw.size()) + " doubles");
        for (double v : raw)
            if (!std::isfinite(v) || v < 0.0 || v > 1.0)
                manifest_error(line_no, fname + " has pixels outside [0,1]");

        Sample s;
        s.image = resize_crop(raw, c, h, w, target_h, target_w);
        s.label = label;
        s.scene_id = static_cast<std::size_t>(scene);
        ds.samples.push_back(std::move(s));
    }
    if (!saw_header) throw std::runtime_error("ingest: manifest.csv is empty");
    if (ds.samples.empty()) throw std::runtime_error("ingest: manifest.csv has no data rows");

    if (!declared) {
        lo = hi = ds.samples.front().label;
        for (const auto& s : ds.samples) {
            lo = std::min(lo, s.label);
            hi = std::max(hi, s.label);
        }
    }
    if (hi - lo <= 0.0)
        throw std::runtime_error("ingest: label column is constant, cannot normalize");
    for (auto& s : ds.samples) s.label = (s.label - lo) / (hi - lo);
    return ds;
}

}  // namespace cprl

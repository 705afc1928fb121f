#include "cprl/report.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace fs = std::filesystem;
using nlohmann::json;

namespace cprl {

namespace {

std::string utc_stamp() {
    const std::time_t now = std::time(nullptr);
    std::tm tm{};
    gmtime_r(&now, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y%m%dT%H%M%SZ", &tm);
    return buf;
}

}  // namespace

std::string create_run_dir(const std::string& root, const std::string& hash8) {
    std::error_code ec;
    fs::create_directories(root, ec);
    if (ec) throw OutputError("output: cannot create root " + root + ": " + ec.message());

    const std::string stem = utc_stamp() + "-" + hash8;
    for (int suffix = 0; suffix < 1000; ++suffix) {
        fs::path dir = fs::path(root) / (suffix == 0 ? stem : stem + "-" + std::to_string(suffix));
        if (!fs::create_directory(dir, ec)) {
            if (ec) throw OutputError("output: cannot create " + dir.string() + ": " + ec.message());
            continue;  // exists, try the next suffix
        }
        const fs::path lock = dir / ".lock";
        const int fd = ::open(lock.c_str(), O_CREAT | O_EXCL | O_WRONLY, 0644);
        if (fd < 0) throw OutputError("output: cannot claim lock in " + dir.string());
        ::close(fd);
        return dir.string();
    }
    throw OutputError("output: too many runs collide on " + stem);
}

std::string format_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::string format_metric(const std::optional<double>& v) {
    return v ? format_double(*v) : "undefined";
}

void write_text(const std::string& path, const std::string& content) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw OutputError("output: cannot open " + path);
    os << content;
    if (!os) throw OutputError("output: write failed for " + path);
}

void write_json(const std::string& path, const json& j) {
    write_text(path, j.dump(2) + "\n");
}

json metric_json(const MetricTriple& t) {
    json j;
    j["srcc"] = t.srcc ? json(*t.srcc) : json("undefined");
    j["plcc"] = t.plcc ? json(*t.plcc) : json("undefined");
    j["mse"] = t.mse;
    return j;
}

std::string curve_csv(const std::vector<CurveRow>& rows) {
    std::ostringstream os;
    os << "epoch,split,srcc,plcc,mse,loss,phase_counts\n";
    for (const auto& r : rows)
        os << r.epoch << ',' << r.split << ',' << format_metric(r.srcc) << ','
           << format_metric(r.plcc) << ',' << format_double(r.mse) << ','
           << format_double(r.loss) << ',' << r.phase_counts << '\n';
    return os.str();
}

std::string sweep_csv(const std::vector<SweepRow>& rows) {
    std::ostringstream os;
    os << "epsilon,srcc,plcc,mse\n";
    for (const auto& r : rows)
        os << format_double(r.epsilon) << ',' << format_metric(r.metrics.srcc) << ','
           << format_metric(r.metrics.plcc) << ',' << format_double(r.metrics.mse) << '\n';
    return os.str();
}

std::string landscape_csv(const LandscapeGrid& grid) {
    std::ostringstream os;
    for (std::size_t iu = 0; iu < grid.resolution; ++iu) {
        for (std::size_t iv = 0; iv < grid.resolution; ++iv) {
            if (iv) os << ',';
            os << format_double(grid.scores[iu * grid.resolution + iv]);
        }
        os << '\n';
    }
    return os.str();
}

std::string activations_csv(const std::vector<ActivationPair>& pairs) {
    std::ostringstream os;
    os << "channel,clean,adversarial\n";
    for (const auto& p : pairs)
        os << p.channel << ',' << format_double(p.clean) << ',' << format_double(p.adversarial)
           << '\n';
    return os.str();
}

}  // namespace cprl

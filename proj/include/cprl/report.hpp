#pragma once

#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "cprl/attacks.hpp"
#include "cprl/metrics.hpp"
#include "cprl/trainer.hpp"

namespace cprl {

struct OutputError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Makes <root>/<UTC stamp>-<hash8> (suffixed -1, -2, ... if taken) and claims
/// its .lock file exclusively. The timestamp lives only in the directory name,
/// keeping every file inside byte-reproducible.
std::string create_run_dir(const std::string& root, const std::string& hash8);

std::string format_double(double v);  // %.17g, round-trip exact
std::string format_metric(const std::optional<double>& v);  // number or "undefined"

void write_text(const std::string& path, const std::string& content);
void write_json(const std::string& path, const nlohmann::json& j);

nlohmann::json metric_json(const MetricTriple& t);

std::string curve_csv(const std::vector<CurveRow>& rows);
std::string sweep_csv(const std::vector<SweepRow>& rows);
std::string landscape_csv(const LandscapeGrid& grid);
std::string activations_csv(const std::vector<ActivationPair>& pairs);

}  // namespace cprl

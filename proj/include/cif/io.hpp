#pragma once

// File formats: JSON for distributions, Fisher matrices, parameters and
// configs; lines01 / csv for sample rows; CSV for traces and result tables.

#include "cif/eval.hpp"
#include "cif/fisher.hpp"
#include "cif/rbm.hpp"
#include "cif/sbm.hpp"

#include <json.hpp>

#include <string>

namespace cif {

using Json = nlohmann::ordered_json;

Json to_json(const Distribution& d);
Distribution distribution_from_json(const Json& j);

Json to_json(const FisherMatrix& f);

Json to_json(const SbmParams& p);
SbmParams sbm_params_from_json(const Json& j);

Json to_json(const RbmParams& p);
RbmParams rbm_params_from_json(const Json& j);

// Flat config object; unknown keys are errors.
TrainConfig train_config_from_json(const Json& j);
Json to_json(const TrainConfig& cfg);

ExperimentSpec experiment_spec_from_json(const Json& j, const std::string& base_dir = "");
Json to_json(const ExperimentSpec& spec);

// One state per line as a 0/1 string; an optional first line "# {json}" carries the metadata.
SampleSet read_lines01(const std::string& path);
SampleSet parse_lines01(const std::string& text, const std::string& source);
// Comma-separated 0/1 cells, one row per line.
SampleSet parse_csv01(const std::string& text, const std::string& source);
std::string format_lines01(const SampleSet& s);

std::string format_trace_csv(const std::vector<TraceRow>& trace);
std::string format_ip_trace_csv(const std::vector<IpTraceRow>& trace);
std::string format_results_csv(const ResultTable& table);
Json summary_json(const ResultTable& table);

std::string read_file(const std::string& path);
Json read_json_file(const std::string& path);
// Writes through a temporary file in the same directory and renames it into place.
void write_file_atomic(const std::string& path, const std::string& content);

// Shortest round-trip decimal form of a double ("nan" for NaN).
std::string format_double(Scalar v);

}  // namespace cif

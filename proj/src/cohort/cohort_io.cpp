#include <algorithm>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

#include "json.hpp"
#include "swm/cohort.hpp"
#include "swm/cohort_json.hpp"
#include "swm/error.hpp"

namespace swm::cohort {

using nlohmann::json;

std::size_t Cohort::num_steps() const {
  std::size_t n = 0;
  for (const auto& t : trajectories) n += t.steps.size();
  return n;
}

void sync_statics(Trajectory& trajectory) {
  const auto& s = trajectory.statics;
  const std::array<double, kNumStatic> values{s.age, static_cast<double>(s.gender), s.weight,
                                              static_cast<double>(s.readmission), s.comorbidity_index};
  for (auto& step : trajectory.steps) {
    for (std::size_t i = 0; i < kNumStatic; ++i) {
      step.state.values[i] = values[i];
      step.state.observed[i] = true;
    }
  }
}

void validate_trajectory(const Trajectory& trajectory) {
  if (trajectory.steps.empty()) throw ContractError("trajectory '" + trajectory.patient_id + "' has no steps");
  for (std::size_t t = 0; t < trajectory.steps.size(); ++t) {
    const auto& step = trajectory.steps[t];
    if (step.hour != static_cast<int>(4 * t)) {
      throw ContractError("trajectory '" + trajectory.patient_id + "': step " + std::to_string(t) + " has hour " +
                          std::to_string(step.hour));
    }
    validate_action(step.action);
    for (std::size_t i = 0; i < kNumStatic; ++i) {
      if (step.state.values[i] != trajectory.steps.front().state.values[i]) {
        throw ContractError("trajectory '" + trajectory.patient_id + "': static feature changes across steps");
      }
    }
  }
}

namespace {

json number_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

double read_number(const json& j) {
  if (j.is_null()) return kMissing;
  if (!j.is_number()) throw std::invalid_argument("expected number");
  return j.get<double>();
}

json doses_to_json(const RawDoses& d) {
  json fluids = json::array();
  for (const auto& f : d.fluids) fluids.push_back({{"kind", f.kind}, {"volume_ml", f.volume_ml}});
  return {{"norepinephrine", d.norepinephrine}, {"epinephrine", d.epinephrine}, {"phenylephrine", d.phenylephrine},
          {"dopamine", d.dopamine},             {"vasopressin", d.vasopressin}, {"fluids", fluids}};
}

RawDoses doses_from_json(const json& j) {
  RawDoses d;
  d.norepinephrine = j.at("norepinephrine").get<double>();
  d.epinephrine = j.at("epinephrine").get<double>();
  d.phenylephrine = j.at("phenylephrine").get<double>();
  d.dopamine = j.at("dopamine").get<double>();
  d.vasopressin = j.at("vasopressin").get<double>();
  for (const auto& f : j.at("fluids")) {
    FluidVolume fv{f.at("kind").get<std::string>(), f.at("volume_ml").get<double>()};
    fluid_coefficient(fv.kind);  // rejects kinds outside the catalog
    d.fluids.push_back(std::move(fv));
  }
  return d;
}

json trajectory_to_json(const Trajectory& t) {
  json steps = json::array();
  for (const auto& s : t.steps) {
    json values = json::array(), observed = json::array();
    for (std::size_t i = 0; i < kNumFeatures; ++i) {
      values.push_back(number_or_null(s.state.values[i]));
      observed.push_back(s.state.observed[i]);
    }
    steps.push_back({{"hour", s.hour},
                     {"state", {{"values", values}, {"observed", observed}}},
                     {"doses", doses_to_json(s.doses)},
                     {"action", {{"vaso_bin", s.action.vaso_bin}, {"fluid_bin", s.action.fluid_bin}}}});
  }
  return {{"patient_id", t.patient_id},
          {"static",
           {{"age", t.statics.age},
            {"gender", t.statics.gender},
            {"weight", t.statics.weight},
            {"readmission", t.statics.readmission},
            {"comorbidity_index", t.statics.comorbidity_index}}},
          {"outcome", std::string(outcome_name(t.outcome))},
          {"steps", steps}};
}

Trajectory trajectory_from_json(const json& j) {
  Trajectory t;
  t.patient_id = j.at("patient_id").get<std::string>();
  const auto& st = j.at("static");
  t.statics.age = st.at("age").get<double>();
  t.statics.gender = st.at("gender").get<int>();
  t.statics.weight = st.at("weight").get<double>();
  t.statics.readmission = st.at("readmission").get<int>();
  t.statics.comorbidity_index = st.at("comorbidity_index").get<double>();
  const auto outcome = j.at("outcome").get<std::string>();
  if (outcome == "survived") {
    t.outcome = Outcome::kSurvived;
  } else if (outcome == "died") {
    t.outcome = Outcome::kDied;
  } else {
    throw std::invalid_argument("unknown outcome '" + outcome + "'");
  }
  for (const auto& sj : j.at("steps")) {
    Step s;
    s.hour = sj.at("hour").get<int>();
    const auto& values = sj.at("state").at("values");
    const auto& observed = sj.at("state").at("observed");
    if (values.size() != kNumFeatures || observed.size() != kNumFeatures) {
      throw std::invalid_argument("state vectors must have exactly 42 entries");
    }
    for (std::size_t i = 0; i < kNumFeatures; ++i) {
      s.state.values[i] = read_number(values[i]);
      s.state.observed[i] = observed[i].get<bool>();
    }
    s.doses = doses_from_json(sj.at("doses"));
    s.action = Action(sj.at("action").at("vaso_bin").get<int>(), sj.at("action").at("fluid_bin").get<int>());
    t.steps.push_back(std::move(s));
  }
  validate_trajectory(t);
  return t;
}

}  // namespace

json discretization_to_json(const DiscretizationSpec& d) {
  return {{"vaso_edges", d.vaso_edges}, {"fluid_edges", d.fluid_edges}};
}

DiscretizationSpec discretization_from_json(const json& j) {
  DiscretizationSpec d;
  d.vaso_edges = j.at("vaso_edges").get<std::array<double, 3>>();
  d.fluid_edges = j.at("fluid_edges").get<std::array<double, 3>>();
  return d;
}

json normalization_to_json(const NormalizationSpec& n) {
  json features = json::array();
  for (std::size_t i = 0; i < kNumFeatures; ++i) {
    features.push_back({{"key", std::string(feature_info(i).key)},
                        {"median", n.median[i]},
                        {"mean", n.mean[i]},
                        {"std", n.std[i]},
                        {"log_transform", n.log_transform[i]}});
  }
  return {{"features", features}};
}

NormalizationSpec normalization_from_json(const json& j) {
  NormalizationSpec n;
  const auto& features = j.at("features");
  if (features.size() != kNumFeatures) throw std::invalid_argument("normalization must list 42 features");
  for (std::size_t i = 0; i < kNumFeatures; ++i) {
    const auto& f = features[i];
    if (f.at("key").get<std::string>() != feature_info(i).key) {
      throw std::invalid_argument("normalization feature order mismatch at " + std::to_string(i));
    }
    n.median[i] = f.at("median").get<double>();
    n.mean[i] = f.at("mean").get<double>();
    n.std[i] = f.at("std").get<double>();
    n.log_transform[i] = f.at("log_transform").get<bool>();
    if (!(n.std[i] > 0.0)) throw std::invalid_argument("normalization std must be positive");
  }
  return n;
}

std::string serialize_cohort(const Cohort& cohort) {
  std::string out;
  json header = {{"schema_version", std::string(kCohortSchemaVersion)},
                 {"seed", cohort.seed},
                 {"split_seed", cohort.split_seed},
                 {"n_trajectories", cohort.trajectories.size()},
                 {"discretization", discretization_to_json(cohort.discretization)},
                 {"normalization", normalization_to_json(cohort.normalization)}};
  out += header.dump();
  out += '\n';
  for (const auto& t : cohort.trajectories) {
    out += trajectory_to_json(t).dump();
    out += '\n';
  }
  return out;
}

Cohort parse_cohort(std::string_view text) {
  Cohort cohort;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  bool header_seen = false;
  std::size_t expected = 0;
  while (pos < text.size()) {
    std::size_t end = text.find('\n', pos);
    const bool terminated = end != std::string_view::npos;
    if (!terminated) end = text.size();
    std::string_view line = text.substr(pos, end - pos);
    pos = end + 1;
    ++line_no;
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      throw ParseError(line_no, std::string("malformed record: ") + e.what());
    }
    if (!header_seen) {
      if (!j.is_object() || !j.contains("schema_version")) throw ParseError(line_no, "missing header record");
      const auto version = j.at("schema_version").get<std::string>();
      if (version != kCohortSchemaVersion) {
        throw VersionError("unsupported cohort schema version '" + version + "' (expected '" +
                           std::string(kCohortSchemaVersion) + "')");
      }
      try {
        cohort.seed = j.at("seed").get<std::uint64_t>();
        cohort.split_seed = j.at("split_seed").get<std::uint64_t>();
        expected = j.at("n_trajectories").get<std::size_t>();
        cohort.discretization = discretization_from_json(j.at("discretization"));
        cohort.normalization = normalization_from_json(j.at("normalization"));
      } catch (const std::exception& e) {
        throw ParseError(line_no, std::string("bad header: ") + e.what());
      }
      header_seen = true;
      continue;
    }
    try {
      cohort.trajectories.push_back(trajectory_from_json(j));
    } catch (const Error& e) {
      throw ParseError(line_no, e.what());
    } catch (const std::exception& e) {
      throw ParseError(line_no, std::string("bad trajectory: ") + e.what());
    }
  }
  if (!header_seen) throw ParseError(1, "empty cohort file");
  if (cohort.trajectories.size() != expected) {
    throw ParseError(line_no, "header announces " + std::to_string(expected) + " trajectories, found " +
                                  std::to_string(cohort.trajectories.size()));
  }
  return cohort;
}

void save_cohort(const Cohort& cohort, const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  out << serialize_cohort(cohort);
  if (!out) throw IoError("failed writing '" + path + "'");
}

Cohort load_cohort(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_cohort(buf.str());
}

CohortSplit split_cohort(const Cohort& cohort) {
  const std::size_t n = cohort.trajectories.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(cohort.split_seed);
  for (std::size_t i = n; i > 1; --i) {
    std::uniform_int_distribution<std::size_t> pick(0, i - 1);
    std::swap(order[i - 1], order[pick(rng)]);
  }
  const std::size_t n_train = (n * 7) / 10;
  const std::size_t n_val = (n * 2) / 10;
  CohortSplit split;
  for (Cohort* part : {&split.train, &split.validation, &split.test}) {
    part->discretization = cohort.discretization;
    part->normalization = cohort.normalization;
    part->seed = cohort.seed;
    part->split_seed = cohort.split_seed;
  }
  for (std::size_t k = 0; k < n; ++k) {
    Cohort& dst = k < n_train ? split.train : (k < n_train + n_val ? split.validation : split.test);
    dst.trajectories.push_back(cohort.trajectories[order[k]]);
  }
  return split;
}

}  // namespace swm::cohort

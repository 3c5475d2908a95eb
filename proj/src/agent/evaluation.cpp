#include "swm/agent.hpp"
#include "swm/error.hpp"
#include "swm/external_agent.hpp"

namespace swm::agent {

std::vector<ope::EvalReport> evaluate_policies(std::shared_ptr<const wm::WorldModelParams> params,
                                               const cohort::Cohort& cohort, const std::vector<std::string>& names,
                                               const ope::EvalOptions& options, std::uint64_t seed) {
  if (names.empty()) throw ContractError("no policies to evaluate");
  const auto split = cohort::split_cohort(cohort);
  if (split.train.trajectories.empty() || split.test.trajectories.empty()) {
    throw ContractError("cohort too small to split into fit and evaluation parts");
  }
  const ope::Evaluator evaluator(split.train, options);
  std::vector<ope::EvalReport> out;
  for (const auto& name : names) {
    ope::TargetPolicy target;
    if (name == "clinician" || name == "clinician_replay") {
      target = evaluator.clinician_policy();
    } else if (name.rfind("http://", 0) == 0) {
      auto transport = std::make_shared<HttpAgentTransport>(name);
      target = to_target(std::make_shared<ExternalAgentPolicy>(transport, AdapterConfig{}, params, name));
    } else {
      target = to_target(std::shared_ptr<Policy>(make_policy(name, params, seed)));
    }
    out.push_back(evaluator.evaluate(split.test, target));
  }
  return out;
}

}  // namespace swm::agent

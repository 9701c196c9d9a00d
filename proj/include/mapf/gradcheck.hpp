#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "mapf/nn.hpp"

namespace mapf::gradcheck {

struct Options {
  double step = 1e-4;
  double tolerance = 1e-3;
  double floor = 1e-6;     // denominator floor of the relative error
  int max_entries = 0;     // per tensor; 0 checks every entry
  std::uint64_t seed = 1;  // picks entries when max_entries > 0
};

struct TensorReport {
  std::string name;
  double max_rel_err = 0.0;
  int checked = 0;
  bool pass = true;
};

struct SuiteReport {
  std::string suite;
  std::vector<TensorReport> tensors;
  double seconds = 0.0;
  bool pass = true;
};

// rel = |a - n| / max(|a|, |n|, floor)
double relative_error(double analytic, double numeric, double floor);

// `loss` evaluates the scalar objective from the current parameter values;
// `backward` must leave the analytic gradient in every Param::grad (it is
// responsible for zeroing first). Central differences perturb one entry at a
// time and restore it afterwards.
SuiteReport check_params(const std::string& suite, nn::ParamSet& ps,
                         const std::function<double()>& loss,
                         const std::function<void()>& backward, const Options& opt,
                         const std::vector<std::string>& only = {});

// Suites: distance embedding, single attention layer, full communication
// block (rmha and graph_comm), encoder, heads, an end-to-end two-step model
// unroll (N=3, d=8) and the PPO loss. Configurations use N=4, d=8, h=2, L=2.
std::vector<SuiteReport> run_all(const Options& opt);

std::string format_report(const std::vector<SuiteReport>& reports);

}  // namespace mapf::gradcheck

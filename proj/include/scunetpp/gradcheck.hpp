#pragma once

#include <ostream>
#include <string>
#include <vector>

#include "scunetpp/tensor.hpp"

namespace scunet {

struct GradCheckResult {
    std::string name;
    double max_rel_err = 0.0;
    double tol = 0.0;
    bool pass = false;
};

// Analytic-vs-central-difference checks for every differentiable op and the
// standard composites (swin block, bottleneck unit, fusion node, loss). Each
// check runs `seeds` rounds with fresh random inputs.
std::vector<GradCheckResult> gradcheck_ops(int seeds, uint64_t seed0 = 1234);

// End-to-end check through a 32x32 / C=8 / w=4 micro model in train mode:
// sampled coordinates of the input and of every parameter group.
GradCheckResult gradcheck_micro_model(int seeds, uint64_t seed0 = 99);

bool all_pass(const std::vector<GradCheckResult>& results);
void print_results(const std::vector<GradCheckResult>& results, std::ostream& os);

// max |a-f| / max(|a|_inf, |f|_inf, 1e-3)
double grad_rel_err(const std::vector<double>& analytic, const std::vector<double>& fd);

}  // namespace scunet

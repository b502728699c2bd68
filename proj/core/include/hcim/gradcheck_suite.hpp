#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "hcim/gradcheck.hpp"

namespace hcim {

struct NamedGradCheck {
  std::string check;  // e.g. "mlp-gelu", "lora", "lif-recurrent"
  GradCheckReport report;
};

/// Finite-difference checks over every layer kind (dense, each activation,
/// softmax-CE head, LIF reservoir, mixer, LoRA adapters, added head rows).
/// `corrupt` perturbs one analytic gradient as a negative control.
std::vector<NamedGradCheck> run_gradcheck_suite(std::uint64_t seed, bool corrupt = false);

}  // namespace hcim

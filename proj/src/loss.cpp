#include "ulb/loss.hpp"

#include <array>
#include <stdexcept>
#include <utility>

namespace ulb {

namespace {

constexpr std::array<std::pair<LossKind, const char*>, 9> kLossNames{{
    {LossKind::ce, "ce"},
    {LossKind::ce_entropy_mse, "ce_entropy_mse"},
    {LossKind::ce_sym_kl, "ce_sym_kl"},
    {LossKind::kl_distill, "kl_distill"},
    {LossKind::mse_distill, "mse_distill"},
    {LossKind::uniform_kl, "uniform_kl"},
    {LossKind::contrastive, "contrastive"},
    {LossKind::neggrad_plus, "neggrad_plus"},
    {LossKind::l1_ce, "l1_ce"},
}};

}  // namespace

const char* loss_kind_name(LossKind k) {
    for (const auto& [kind, name] : kLossNames)
        if (kind == k) return name;
    throw std::logic_error("unknown loss kind");
}

LossKind loss_kind_from_name(const std::string& name) {
    for (const auto& [kind, n] : kLossNames)
        if (name == n) return kind;
    throw std::invalid_argument("unknown loss '" + name + "'");
}

}  // namespace ulb

#include "fedclust/controller.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace fedclust::controller {

State State::initial(int n) {
  if (n < 2) throw std::invalid_argument("controller needs n >= 2 clients");
  State state;
  state.p = n;
  state.d = 1;
  return state;
}

double reduction_ratio(double loss_prev, double loss_cur) {
  if (!std::isfinite(loss_prev) || !std::isfinite(loss_cur)) {
    throw std::invalid_argument("reduction_ratio needs finite losses");
  }
  if (std::abs(loss_prev) < 1e-12) return 0.0;
  return (loss_prev - loss_cur) / std::abs(loss_prev);
}

int step(State& state, const Config& cfg, double r, rng::Rng& rng) {
  const bool improving = r > cfg.w;
  // The stabilizers judge the current p by the experience gathered before
  // this round.
  const Experience seen = state.experience[state.p];
  auto& bucket = state.experience[state.p];
  if (improving) {
    ++bucket.good;
  } else {
    ++bucket.bad;
  }

  if (state.hold_remaining > 0) {
    --state.hold_remaining;
    return state.p;
  }

  const int old_p = state.p;
  if (improving) {
    state.p = std::max(1, state.p - state.d);
    state.d = std::min(2 * state.d, cfg.n);
    state.stall = 0;
  } else {
    ++state.stall;
    bool keep = false;
    switch (cfg.mode) {
      case Mode::Tcp:
        break;
      case Mode::Sa:
        keep = rng.next_double() <
               std::exp(-static_cast<double>(state.stall) /
                        cfg.sa_temperature);
        break;
      case Mode::Exp: {
        const double keep_prob =
            static_cast<double>(seen.good + 1) /
            static_cast<double>(seen.good + seen.bad + 2);
        keep = rng.next_double() < keep_prob;
        break;
      }
    }
    if (keep) {
      state.d = 1;
    } else {
      state.p = std::min(2 * state.p, cfg.n);
      state.d = 1;
      state.hold_remaining = cfg.hold_rounds;
    }
  }
  if (state.p != old_p) state.stall = 0;
  return state.p;
}

}  // namespace fedclust::controller

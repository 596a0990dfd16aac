#pragma once

#include <cstdint>
#include <map>

#include "fedclust/rng.hpp"

namespace fedclust::controller {

enum class Mode { Tcp, Sa, Exp };

struct Config {
  int n = 8;                   // total clients; upper bound for p
  double w = 0.01;             // loss-reduction threshold
  int hold_rounds = 5;         // freeze length after an increase
  Mode mode = Mode::Tcp;
  double sa_temperature = 10.0;
};

struct Experience {
  long good = 0;
  long bad = 0;
};

// Adaptive cluster-count state. p starts at n with decrement d = 1; d doubles
// over consecutive improving rounds (capped at n), and a non-improving round
// resets d and sends p back to min(2p, n) unless a stabilizer keeps it.
struct State {
  int p = 0;
  int d = 1;
  int hold_remaining = 0;
  int stall = 0;  // consecutive non-improving rounds at the current p
  std::map<int, Experience> experience;

  static State initial(int n);
};

// (L_prev - L_cur) / |L_prev|; 0 when the denominator is below 1e-12.
// Throws on non-finite input.
double reduction_ratio(double loss_prev, double loss_cur);

// Advances the controller with this round's reduction ratio; returns the new
// p. The rng is consulted only by the SA / EXP stabilizers on non-improving
// rounds.
int step(State& state, const Config& cfg, double r, rng::Rng& rng);

}  // namespace fedclust::controller

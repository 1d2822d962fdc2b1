#include "macfield/presets.hpp"

#include <cmath>

namespace macfield {

Scenario example1() {
  ClassParams c;
  c.K = 12;
  c.sigma = 1.0;
  c.q.resize(13);
  c.q[0] = 1.0 / 3200.0;
  for (int k = 1; k <= 12; ++k) c.q[k] = std::pow(1.2, k - 1) / 160.0;
  Scenario s;
  s.classes = {c};
  s.N = 1200;
  s.mode = RateMode::raw;
  return validate(std::move(s));
}

Scenario example2() {
  ClassParams h;
  h.K = 20;
  h.sigma = 0.5;
  h.q.resize(21);
  h.q[0] = 1.0 / 2400.0;
  h.q[1] = 1.0 / 480.0;
  for (int k = 2; k <= 20; ++k) h.q[k] = std::pow(0.8, k - 1) / 40.0;

  ClassParams l;
  l.K = 20;
  l.sigma = 0.5;
  l.q.assign(21, 1.0 / 64.0);
  l.q[0] = 1.0 / 3840.0;

  Scenario s;
  s.classes = {h, l};
  s.delta = 0;
  s.N = 1280;
  s.mode = RateMode::raw;
  return validate(std::move(s));
}

std::optional<Scenario> preset(std::string_view id) {
  if (id == "example1") return example1();
  if (id == "example2") return example2();
  return std::nullopt;
}

}  // namespace macfield

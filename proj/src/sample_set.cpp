#include "cif/sample_set.hpp"

#include <cmath>

namespace cif {

Mask SampleSet::state(Index row) const {
  Mask m = 0;
  for (int i = 0; i < n; ++i)
    if (rows(row, i)) m |= Mask{1} << i;
  return m;
}

SampleSet make_sample_set(int n, std::vector<Mask> states, SampleMeta meta) {
  SampleSet s;
  s.n = n;
  s.meta = std::move(meta);
  s.rows.resize(Index(states.size()), n);
  for (std::size_t r = 0; r < states.size(); ++r)
    for (int i = 0; i < n; ++i) s.rows(Index(r), i) = (states[r] >> i) & 1u;
  return s;
}

Scalar smoothing_delta(Index sample_count, int n) {
  return 1.0 / (static_cast<Scalar>(sample_count) * std::ldexp(1.0, n));
}

Vector state_counts(const SampleSet& s) {
  if (s.n > kMaxVariables) throw Error(ErrorCode::CapExceeded, "histogram needs n <= 20");
  Vector counts = Vector::Zero(state_count(s.n));
  for (Index r = 0; r < s.size(); ++r) counts(s.state(r)) += 1;
  return counts;
}

Distribution empirical_distribution(const SampleSet& s) {
  if (s.size() < 1) throw Error(ErrorCode::BadLength, "empty sample set");
  const Vector counts = state_counts(s);
  const Scalar total = static_cast<Scalar>(s.size());
  return Distribution::from_p((counts / total).array() + smoothing_delta(s.size(), s.n));
}

Moments raw_moments(const SampleSet& s) {
  const Matrix x = s.as_real();
  const Scalar total = static_cast<Scalar>(s.size());
  Moments m;
  m.first = x.colwise().sum().transpose() / total;
  m.second = x.transpose() * x / total;
  return m;
}

Moments smoothed_moments(const SampleSet& s) {
  Moments m = raw_moments(s);
  const Scalar inv_n = 1.0 / static_cast<Scalar>(s.size());
  const Scalar scale = 1.0 / (1.0 + inv_n);
  m.first = (m.first.array() + 0.5 * inv_n) * scale;
  m.second = (m.second.array() + 0.25 * inv_n) * scale;
  m.second.diagonal() = m.first;
  return m;
}

}  // namespace cif

#include "mvp2p/metrics.hpp"

#include <cstdio>
#include <stdexcept>

namespace mvp2p {

double compute_ps(const Metrics& m) {
  if (m.total_bits <= 0) throw std::invalid_argument("no bits served in the analysis window");
  return m.server_bits / m.total_bits;
}

void write_metrics_csv(const Metrics& m, const std::vector<std::string>& layer_names,
                       const std::string& path) {
  std::FILE* f = std::fopen(path.c_str(), "wb");
  if (!f) throw std::runtime_error("cannot write " + path);
  std::fprintf(f, "time_s,server_bits,total_bits,ps,missed_deadlines\n");
  for (const auto& s : m.samples) {
    double ps = s.total_bits > 0 ? s.server_bits / s.total_bits : 0.0;
    std::fprintf(f, "%.3f,%.0f,%.0f,%.6f,%lld\n", s.t, s.server_bits, s.total_bits, ps,
                 static_cast<long long>(s.missed));
  }
  std::fprintf(f, "\nlayer,server_bits\n");
  for (std::size_t i = 0; i < m.per_layer_server_bits.size(); ++i) {
    std::fprintf(f, "%s,%.0f\n", layer_names[i].c_str(), m.per_layer_server_bits[i]);
  }
  std::fclose(f);
}

}  // namespace mvp2p

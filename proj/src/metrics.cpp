#include "avse/metrics.hpp"

#include <cmath>
#include <fstream>

#include "avse/error.hpp"

namespace avse {

double mask_mae(const RealMatrix& pred, const RealMatrix& target) {
  if (pred.rows() != target.rows() || pred.cols() != target.cols())
    throw Error("mask_mae: shape mismatch");
  if (pred.size() == 0) throw Error("mask_mae: empty masks");
  return (pred - target).cwiseAbs().mean();
}

double snr_db(const Waveform& reference, const Waveform& estimate) {
  if (reference.size() != estimate.size())
    throw Error("snr_db: length mismatch (" + std::to_string(reference.size()) + " vs " +
                std::to_string(estimate.size()) + ")");
  double signal = 0.0;
  double error = 0.0;
  for (std::size_t i = 0; i < reference.size(); ++i) {
    const double r = reference.samples[i];
    const double e = r - estimate.samples[i];
    signal += r * r;
    error += e * e;
  }
  if (signal <= 0.0) throw Error("snr_db: silent reference");
  if (error < 1e-12 * signal) return kSnrCapDb;
  return 10.0 * std::log10(signal / error);
}

double relative_improvement(double mae_a, double mae_av) {
  if (!(mae_a > 0.0)) throw Error("relative_improvement: audio-only MAE must be positive");
  return 100.0 * (mae_a - mae_av) / mae_a;
}

double round1(double x) { return std::round(x * 10.0) / 10.0; }

void write_eval_csv(const std::filesystem::path& path, const std::vector<EvalRow>& rows) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  out << "model,loss,mode,snr_db_mean,mask_mae_mean\n";
  out.precision(6);
  out << std::fixed;
  for (const auto& r : rows)
    out << r.model << ',' << r.loss << ',' << r.mode << ',' << r.snr_db_mean << ','
        << r.mask_mae_mean << '\n';
}

}  // namespace avse

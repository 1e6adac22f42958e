#include "difflab/denoisers/denoiser.hpp"

namespace difflab {

void Denoiser::predict_into(const TokenSequence& z, double t, const VisibilitySpec& vis,
                            CategoricalField& out) const {
  for (int row = 0; row < z.length(); ++row) {
    predict_row_into(z, row, t, vis, out.row(row));
  }
}

CategoricalField Denoiser::predict(const TokenSequence& z, double t,
                                   const VisibilitySpec& vis) const {
  CategoricalField out(z.length(), vocab().size_k);
  predict_into(z, t, vis, out);
  return out;
}

}  // namespace difflab

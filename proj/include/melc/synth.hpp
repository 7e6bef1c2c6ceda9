#pragma once

#include <cstdint>
#include <string>

#include "melc/cohort.hpp"

namespace melc {

// Synthetic longitudinal cohorts with controllable disease dynamics. Each
// patient has a persistent appearance texture; each eye progresses with its
// own onset (the fellow eye lags) and a shared per-patient rate. Rendered
// scans combine the patient texture, a bright band whose position tracks
// disease severity, a mild age tilt, a sex-specific pattern and pixel noise.
struct SynthConfig {
  int patients = 200;
  int eyes_per_patient = 2;       // 1 or 2
  double visits_mean = 6.0;
  double visits_stddev = 2.0;
  int visits_min = 2;
  int visits_max = 12;
  double gap_mean_years = 0.35;   // spacing between visits of one eye
  double gap_stddev_years = 0.15;
  double gap_min_years = 0.03;
  double rate_min = 0.05;         // severity per year
  double rate_max = 0.30;
  double fellow_lag_years = 0.75; // onset delay of the trailing eye
  int image_size = 32;
  double noise_level = 0.06;
  double stage_threshold = 0.5;   // stage label = severity > threshold
  double labelled_fraction = 1.0; // the rest of the scans carry no labels

  // renderer
  double texture_amplitude = 0.18;
  // 0: every patient has a unique texture. Otherwise patients share a pool
  // of base textures plus a per-patient perturbation, so appearance alone
  // cannot separate all patients (as with real anatomy).
  int texture_archetypes = 0;
  double texture_jitter = 0.35;   // per-patient share relative to the base texture
  double band_amplitude = 0.12;
  double band_center_hi = 0.78;   // band center (fraction of height) at severity 0
  double band_center_lo = 0.40;   // band center at severity 1
  double band_sigma = 0.05;       // band half-width as a fraction of height
  // vertical ripple whose frequency (not amplitude) encodes severity; the
  // code survives brightness/contrast jitter and crops
  double ripple_amplitude = 0.08;
  double ripple_freq_lo = 3.0;    // cycles over the image height at severity 0
  double ripple_freq_hi = 8.0;    // cycles at severity 1
  // per-scan acquisition artifact: a soft dark stripe at a random position.
  // Both views of one scan share it exactly, so it acts as a scan
  // fingerprint; cross-scan positive pairs do not.
  double artifact_amplitude = 0.0;
  double artifact_sigma = 0.09;   // stripe width as a fraction of image width
  double age_tilt = 0.12;
  double sex_amplitude = 0.05;

  void validate() const;
};

// Per-scan ground truth driving the renderer and the labels.
struct LatentState {
  double severity = 0.0;    // in [0, 1], non-decreasing along an eye
  double age_at_scan = 70;  // years
  int sex = 0;              // binary class
  double acuity = 0.0;      // noisy monotone function of severity
  double ripple_phase = 0.0;
};

struct SynthOutput {
  Cohort cohort;
  ImageStore images;
};

// Patient appearance: a base texture (possibly shared between patients) plus
// a personal perturbation.
struct Appearance {
  uint64_t base_texture_seed = 0;
  uint64_t personal_texture_seed = 0;
};

// Deterministic per (cfg, seed). A labelled_fraction share of records carries
// labels for the tasks stage, age, sex and acuity; image_refs point at
// images/<scan_id>.f32 and the pixel data is returned in memory.
SynthOutput generate_cohort(const SynthConfig& cfg, uint64_t seed);

GrayImage render_scan(const LatentState& latent, const Appearance& appearance, bool mirrored,
                      const SynthConfig& cfg, uint64_t noise_seed);

}  // namespace melc

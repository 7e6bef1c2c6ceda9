#include "melc/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <stdexcept>

#include "melc/rng.hpp"

namespace melc {

namespace {

constexpr uint64_t kPatientTag = 0x9A71;
constexpr uint64_t kNoiseTag = 0x0153;
constexpr uint64_t kAcuityTag = 0xAC01;
constexpr uint64_t kLabelTag = 0x1AB3;

struct TextureField {
  struct Component {
    double amplitude, freq, cos_theta, sin_theta, phase;
  };
  std::vector<Component> components;

  static TextureField make(uint64_t texture_seed) {
    Rng rng(texture_seed);
    TextureField f;
    for (int k = 0; k < 4; ++k) {
      TextureField::Component c;
      c.amplitude = rng.uniform(0.5, 1.0);
      c.freq = rng.uniform(0.8, 2.2);  // cycles across the image
      const double theta = rng.uniform(0.0, M_PI);
      c.cos_theta = std::cos(theta);
      c.sin_theta = std::sin(theta);
      c.phase = rng.uniform(0.0, 2.0 * M_PI);
      f.components.push_back(c);
    }
    return f;
  }

  double at(double fx, double fy) const {  // fx, fy in [0, 1]
    double v = 0.0;
    for (const auto& c : components)
      v += c.amplitude *
           std::sin(2.0 * M_PI * c.freq * (fx * c.cos_theta + fy * c.sin_theta) + c.phase);
    return v / static_cast<double>(components.size());
  }
};

}  // namespace

void SynthConfig::validate() const {
  if (patients < 1) throw std::invalid_argument("synth: need at least one patient");
  if (eyes_per_patient < 1 || eyes_per_patient > 2)
    throw std::invalid_argument("synth: eyes_per_patient must be 1 or 2");
  if (visits_min < 1 || visits_max < visits_min)
    throw std::invalid_argument("synth: bad visit bounds");
  if (gap_min_years <= 0) throw std::invalid_argument("synth: gap_min_years must be positive");
  if (rate_min < 0 || rate_max < rate_min) throw std::invalid_argument("synth: bad rate range");
  if (image_size < 8) throw std::invalid_argument("synth: image_size too small");
  if (noise_level < 0) throw std::invalid_argument("synth: noise_level must be >= 0");
  if (labelled_fraction <= 0 || labelled_fraction > 1)
    throw std::invalid_argument("synth: labelled_fraction must be in (0,1]");
}

GrayImage render_scan(const LatentState& latent, const Appearance& appearance, bool mirrored,
                      const SynthConfig& cfg, uint64_t noise_seed) {
  const int H = cfg.image_size;
  const int W = cfg.image_size;
  const TextureField base = TextureField::make(appearance.base_texture_seed);
  const TextureField personal = TextureField::make(appearance.personal_texture_seed);
  const double jitter = cfg.texture_jitter;
  Rng noise_rng(noise_seed);

  // Severity shows up twice: a bright band that migrates up the image, and a
  // vertical ripple whose spatial frequency tracks severity. The frequency
  // code survives brightness/contrast jitter and crops, and it separates
  // patients at different disease states, so contrastive objectives have to
  // represent it.
  const double band_center =
      (cfg.band_center_hi + (cfg.band_center_lo - cfg.band_center_hi) * latent.severity) *
      (H - 1);
  const double band_sigma = std::max(cfg.band_sigma * H, 0.75);
  const double ripple_freq =
      cfg.ripple_freq_lo + (cfg.ripple_freq_hi - cfg.ripple_freq_lo) * latent.severity;
  const double age_tilt =
      cfg.age_tilt * std::clamp((latent.age_at_scan - 70.0) / 15.0, -1.0, 1.0);
  const double sex_amp = latent.sex ? cfg.sex_amplitude : -cfg.sex_amplitude;
  // scan-specific acquisition artifact, drawn before the pixel noise so the
  // noise stream stays aligned across configurations
  const double artifact_amp =
      cfg.artifact_amplitude > 0 ? noise_rng.uniform(0.6, 1.4) * cfg.artifact_amplitude : 0.0;
  const double artifact_x = noise_rng.uniform(0.0, 1.0);
  const double artifact_sigma = std::max(cfg.artifact_sigma, 1e-3);

  GrayImage img(H, W);
  for (int y = 0; y < H; ++y) {
    const double fy = static_cast<double>(y) / (H - 1);
    const double band =
        cfg.band_amplitude * std::exp(-0.5 * std::pow((y - band_center) / band_sigma, 2));
    const double ripple =
        cfg.ripple_amplitude * std::sin(2.0 * M_PI * ripple_freq * fy + latent.ripple_phase);
    for (int x = 0; x < W; ++x) {
      const double fx = static_cast<double>(x) / (W - 1);
      double v = 0.45;
      v += cfg.texture_amplitude * (base.at(fx, fy) + jitter * personal.at(fx, fy)) /
           (1.0 + jitter);
      v += band + ripple;
      v += age_tilt * (fy - 0.5);
      v += sex_amp * std::sin(2.0 * M_PI * 1.5 * fx) * std::cos(2.0 * M_PI * fy);
      if (artifact_amp > 0) {
        const double dx = (fx - artifact_x) / artifact_sigma;
        v -= artifact_amp * std::exp(-0.5 * dx * dx);
      }
      v += noise_rng.normal(0.0, cfg.noise_level);
      img.at(y, x) = std::clamp(v, 0.0, 1.0);
    }
  }
  if (mirrored) {
    GrayImage flipped(H, W);
    for (int y = 0; y < H; ++y)
      for (int x = 0; x < W; ++x) flipped.at(y, x) = img.at(y, W - 1 - x);
    return flipped;
  }
  return img;
}

SynthOutput generate_cohort(const SynthConfig& cfg, uint64_t seed) {
  cfg.validate();
  SynthOutput out;
  std::vector<ScanRecord> records;
  char buf[64];

  for (int p = 0; p < cfg.patients; ++p) {
    Rng rng(mix_seed(seed, kPatientTag, static_cast<uint64_t>(p)));
    std::snprintf(buf, sizeof buf, "P%04d", p);
    const std::string patient_id(buf);

    Appearance appearance;
    appearance.personal_texture_seed = rng.next_u64();
    appearance.base_texture_seed =
        cfg.texture_archetypes > 0
            ? mix_seed(seed, 0xA2C4,
                       rng.uniform_index(static_cast<uint64_t>(cfg.texture_archetypes)))
            : appearance.personal_texture_seed;
    const int sex = rng.bernoulli(0.5) ? 1 : 0;
    const double age0 = rng.uniform(55.0, 85.0);
    const double start_day = rng.uniform(15000.0, 17000.0);
    const double rate = rng.uniform(cfg.rate_min, cfg.rate_max);
    const bool right_leads = rng.bernoulli(0.5);
    const double lead_onset = rng.uniform(-2.5, 1.5);  // years from the first visit window
    const double ripple_phase = rng.uniform(0.0, 2.0 * M_PI);

    for (int eye = 0; eye < cfg.eyes_per_patient; ++eye) {
      const Laterality lat = eye == 0 ? Laterality::Right : Laterality::Left;
      const bool leads = (lat == Laterality::Right) == right_leads;
      const double onset = leads ? lead_onset : lead_onset + cfg.fellow_lag_years;
      const double eye_rate = rate * rng.uniform(0.9, 1.1);

      int visits = static_cast<int>(std::lround(rng.normal(cfg.visits_mean, cfg.visits_stddev)));
      visits = std::clamp(visits, cfg.visits_min, cfg.visits_max);

      double t_years = rng.uniform(0.0, 0.4);
      for (int visit = 0; visit < visits; ++visit) {
        if (visit > 0)
          t_years += std::max(cfg.gap_min_years,
                              rng.normal(cfg.gap_mean_years, cfg.gap_stddev_years));

        LatentState latent;
        latent.severity = std::clamp(eye_rate * (t_years - onset), 0.0, 1.0);
        latent.age_at_scan = age0 + t_years;
        latent.sex = sex;
        latent.ripple_phase = ripple_phase;

        const uint64_t scan_tag =
            mix_seed(seed, kNoiseTag, (static_cast<uint64_t>(p) << 16) |
                                          (static_cast<uint64_t>(eye) << 8) |
                                          static_cast<uint64_t>(visit));
        Rng acuity_rng(mix_seed(scan_tag, kAcuityTag));
        latent.acuity =
            std::clamp(0.15 + 0.7 * latent.severity + acuity_rng.normal(0.0, 0.03), 0.0, 1.2);

        std::snprintf(buf, sizeof buf, "%s_%s_%02d", patient_id.c_str(),
                      lat == Laterality::Left ? "L" : "R", visit);
        ScanRecord rec;
        rec.scan_id = buf;
        rec.patient_id = patient_id;
        rec.laterality = lat;
        rec.timestamp_days = start_day + years_to_days(t_years);
        rec.image_ref = "images/" + rec.scan_id + ".f32";
        Rng label_rng(mix_seed(scan_tag, kLabelTag));
        if (label_rng.uniform01() < cfg.labelled_fraction) {
          rec.labels["stage"] = latent.severity > cfg.stage_threshold ? 1.0 : 0.0;
          rec.labels["age"] = latent.age_at_scan;
          rec.labels["sex"] = static_cast<double>(sex);
          rec.labels["acuity"] = latent.acuity;
        }

        out.images.emplace(rec.scan_id, render_scan(latent, appearance,
                                                    lat == Laterality::Left, cfg, scan_tag));
        records.push_back(std::move(rec));
      }
    }
  }
  out.cohort = Cohort(std::move(records));
  return out;
}

}  // namespace melc

// SPDX-License-Identifier: Apache-2.0
#include "isac/channels.hpp"

#include <doctest.h>

using namespace isac;

namespace {

PathSet random_paths(int count, Rng& rng, double max_delay) {
  PathSet set;
  for (int p = 0; p < count; ++p) {
    Path path;
    path.gain = rng.complex_normal(1.0);
    path.angle = rng.uniform(-kPi / 2.0, kPi / 2.0);
    path.delay = rng.uniform(0.0, max_delay);
    path.kind = p == 0 ? PathKind::los : PathKind::nlos_single_bounce;
    set.paths.push_back(path);
  }
  return set;
}

OfdmConfig small_ofdm(int k, double eta = 1.0) {
  OfdmConfig o;
  o.n_subcarriers = k;
  o.subcarrier_spacing = 5e6;
  o.pilot_ratio = eta;
  return o;
}

}  // namespace

TEST_CASE("steering vector") {
  ArrayConfig array{4, 0.5};
  SUBCASE("broadside is all ones") {
    const CVector a = steering_vector(0.0, {8, 0.5});
    for (Eigen::Index n = 0; n < a.size(); ++n) CHECK(a(n) == Complex(1.0, 0.0));
  }
  SUBCASE("mirrored angles give conjugate responses") {
    Rng rng(1);
    for (int i = 0; i < 50; ++i) {
      const double t = rng.uniform(-kPi / 2.0, kPi / 2.0);
      const CVector a = steering_vector(t, array), b = steering_vector(-t, array);
      CHECK((a - b.conjugate()).norm() < 1e-14);
      CHECK(a.cwiseAbs().minCoeff() == doctest::Approx(1.0));
    }
  }
  SUBCASE("thirty degrees") {
    const CVector a = steering_vector(deg_to_rad(30.0), array);
    for (int n = 0; n < 4; ++n) {
      const Complex expected(std::cos(kPi * n * 0.5), std::sin(kPi * n * 0.5));
      CHECK(std::abs(a(n) - expected) < 1e-14);
    }
  }
}

TEST_CASE("pilot layout") {
  OfdmConfig o = small_ofdm(64, 0.05);
  CHECK(o.pilot_count() == 3);
  const auto idx = o.pilot_indices();
  CHECK(idx == std::vector<int>{0, 21, 42});
  o.pilot_ratio = 1.0;
  CHECK(o.pilot_indices().size() == 64);
  o.pilot_ratio = 0.001;
  CHECK_THROWS_AS(o.validate(), ConfigError);
  o.pilot_ratio = 1.2;
  CHECK_THROWS_AS(o.validate(), ConfigError);
  o = small_ofdm(1);
  CHECK_THROWS_AS(o.validate(), ConfigError);
}

TEST_CASE("communication channel") {
  ArrayConfig array{8, 0.5};
  SUBCASE("single unit path at broadside and zero delay") {
    PathSet set;
    set.paths.push_back({Complex(1.0, 0.0), 0.0, 0.0, PathKind::los, PathOrigin::direct, -1});
    const CommChannel h = assemble_comm_channel(set, array, small_ofdm(16));
    CHECK((h.h - CMatrix::Constant(8, 16, std::sqrt(8.0))).norm() < 1e-13);
  }
  SUBCASE("subcarrier zero carries no delay phase") {
    Rng rng(2);
    const PathSet set = random_paths(5, rng, 50e-9);
    const CommChannel h = assemble_comm_channel(set, array, small_ofdm(16));
    CVector expected = CVector::Zero(8);
    for (const auto& p : set.paths) expected += p.gain * steering_vector(p.angle, array);
    expected *= std::sqrt(8.0 / 5.0);
    CHECK((h.h.col(0) - expected).norm() < 1e-12);
  }
  SUBCASE("matches a literal triple loop") {
    Rng rng(3);
    const ArrayConfig a4{4, 0.5};
    const OfdmConfig ofdm = small_ofdm(16);
    const PathSet set = random_paths(3, rng, 40e-9);
    const CommChannel h = assemble_comm_channel(set, a4, ofdm);
    const double bw = ofdm.n_subcarriers * ofdm.subcarrier_spacing;
    for (int k = 0; k < 16; ++k)
      for (int n = 0; n < 4; ++n) {
        Complex sum(0.0, 0.0);
        for (const auto& p : set.paths) {
          const double phase = 2.0 * kPi * 0.5 * n * std::sin(p.angle) - 2.0 * kPi * k * p.delay * bw / 16.0;
          sum += p.gain * Complex(std::cos(phase), std::sin(phase));
        }
        CHECK(std::abs(h.h(n, k) - std::sqrt(4.0 / 3.0) * sum) < 1e-12);
      }
  }
  SUBCASE("superposition with a shared prefactor") {
    Rng rng(4);
    const PathSet all = random_paths(5, rng, 60e-9);
    PathSet first, second;
    first.paths.assign(all.paths.begin(), all.paths.begin() + 2);
    second.paths.assign(all.paths.begin() + 2, all.paths.end());
    const OfdmConfig ofdm = small_ofdm(32);
    const CMatrix sum = assemble_comm_channel(first, array, ofdm, 5).h + assemble_comm_channel(second, array, ofdm, 5).h;
    CHECK((assemble_comm_channel(all, array, ofdm).h - sum).norm() < 1e-12);
  }
  SUBCASE("downlink is the transpose") {
    Rng rng(5);
    const CommChannel h = assemble_comm_channel(random_paths(2, rng, 10e-9), array, small_ofdm(4));
    CHECK((h.downlink(2) - h.h.col(2).transpose()).norm() == 0.0);
  }
  CHECK_THROWS_AS(assemble_comm_channel(PathSet{}, array, small_ofdm(4)), ConfigError);
}

TEST_CASE("sensing channel") {
  const ArrayConfig array{4, 0.5};
  const OfdmConfig ofdm = small_ofdm(8);
  SUBCASE("single target is rank one on every subcarrier") {
    PathSet set;
    set.paths.push_back({Complex(0.3, -0.2), 0.4, 20e-9, PathKind::los, PathOrigin::target, 0});
    const SensingChannel hs = assemble_sensing_channel(set, array, ofdm);
    for (const auto& m : hs.h) {
      Eigen::JacobiSVD<CMatrix> svd(m);
      const RVector sv = svd.singularValues();
      CHECK(sv(0) > 0.1);
      CHECK(sv(1) < 1e-14 * sv(0));
    }
    set.paths[0].gain *= 2.0;
    const SensingChannel doubled = assemble_sensing_channel(set, array, ofdm);
    for (int k = 0; k < 8; ++k)
      CHECK(doubled.h[static_cast<std::size_t>(k)].norm() ==
            doctest::Approx(2.0 * hs.h[static_cast<std::size_t>(k)].norm()).epsilon(1e-14));
  }
  SUBCASE("two targets against a literal loop") {
    Rng rng(6);
    const PathSet set = random_paths(2, rng, 40e-9);
    const SensingChannel hs = assemble_sensing_channel(set, array, ofdm);
    const double bw = 8 * ofdm.subcarrier_spacing;
    for (int k = 0; k < 8; ++k)
      for (int r = 0; r < 4; ++r)
        for (int t = 0; t < 4; ++t) {
          Complex sum(0.0, 0.0);
          for (const auto& p : set.paths) {
            const double phase = 2.0 * kPi * 0.5 * (r - t) * std::sin(p.angle) - 2.0 * kPi * k * p.delay * bw / 8.0;
            sum += p.gain * Complex(std::cos(phase), std::sin(phase));
          }
          CHECK(std::abs(hs.h[static_cast<std::size_t>(k)](r, t) - sum) < 1e-12);
        }
  }
  CHECK_THROWS_AS(assemble_sensing_channel(PathSet{}, array, ofdm), ConfigError);
}

TEST_CASE("sensing receive signal") {
  const ArrayConfig array{4, 0.5};
  const OfdmConfig ofdm = small_ofdm(16);
  Rng rng(7);
  const SensingChannel hs = assemble_sensing_channel(random_paths(2, rng, 30e-9), array, ofdm);
  const SensingWaveform w = make_sensing_waveform(SensingPrecoder::sweep, array, ofdm, 8);
  SUBCASE("noiseless echo is H x") {
    const CMatrix r = simulate_sensing_rx(hs, w, 0.0, 1);
    for (int k = 0; k < 16; ++k)
      CHECK(r.col(k) == hs.h[static_cast<std::size_t>(k)] * w.transmitted(k));
  }
  SUBCASE("fixed seed reproduces the output") {
    CHECK(simulate_sensing_rx(hs, w, 0.3, 9) == simulate_sensing_rx(hs, w, 0.3, 9));
    CHECK(simulate_sensing_rx(hs, w, 0.3, 9) != simulate_sensing_rx(hs, w, 0.3, 10));
  }
  SUBCASE("null channel gives white noise of the requested variance") {
    const OfdmConfig big = small_ofdm(25000);
    SensingChannel zero;
    zero.h.assign(25000, CMatrix::Zero(4, 4));
    const SensingWaveform wb = make_sensing_waveform(SensingPrecoder::omni, array, big, 1);
    const CMatrix r = simulate_sensing_rx(zero, wb, 0.7, 3);  // 4 x 25000 = 1e5 draws
    CHECK(r.cwiseAbs2().mean() == doctest::Approx(0.7).epsilon(0.05));
    const CMatrix cov = r * r.adjoint() / static_cast<double>(r.cols());
    for (int i = 0; i < 4; ++i)
      for (int j = 0; j < 4; ++j) {
        if (i == j) CHECK(cov(i, j).real() == doctest::Approx(0.7).epsilon(0.05));
        else CHECK(std::abs(cov(i, j)) < 0.03);
      }
  }
}

TEST_CASE("sensing waveforms have unit-norm precoders") {
  const ArrayConfig array{8, 0.5};
  const OfdmConfig ofdm = small_ofdm(32);
  for (auto kind : {SensingPrecoder::omni, SensingPrecoder::boresight, SensingPrecoder::sweep}) {
    const SensingWaveform w = make_sensing_waveform(kind, array, ofdm, 5);
    for (int k = 0; k < 32; ++k) {
      CHECK(w.precoders.col(k).norm() == doctest::Approx(1.0));
      CHECK(std::norm(w.symbols(k)) == doctest::Approx(ofdm.symbol_power));
    }
  }
}

TEST_CASE("uplink pilots") {
  const ArrayConfig array{8, 0.5};
  const OfdmConfig ofdm = small_ofdm(64, 0.25);
  Rng rng(11);
  const CommChannel h = assemble_comm_channel(random_paths(3, rng, 40e-9), array, ofdm);

  SUBCASE("noiseless pilots invert to the channel") {
    const PilotFrame f = simulate_uplink_pilots(h, ofdm, 2.0, 0.0, 4);
    REQUIRE(f.pilot_indices.size() == 16);
    for (std::size_t p = 0; p < f.pilot_indices.size(); ++p) {
      const auto pp = static_cast<Eigen::Index>(p);
      CHECK(std::norm(f.tx_symbols(pp)) == doctest::Approx(1.0));
      const CVector est = f.rx_signal.col(pp) / (std::sqrt(2.0) * f.tx_symbols(pp));
      CHECK((est - h.h.col(f.pilot_indices[p])).norm() < 1e-12);
    }
  }
  SUBCASE("SNR definition") {
    CHECK(noise_var_for_snr(10.0, 1.0, 1.0) == doctest::Approx(0.1).epsilon(1e-14));
    CHECK(noise_var_for_snr(0.0, 2.0, 0.5) == doctest::Approx(1.0));
  }
  SUBCASE("measured SNR matches the configured value") {
    const double gamma0_db = 10.0;
    const double nv = noise_var_for_snr(gamma0_db, 1.0, 1.0);
    const OfdmConfig full = small_ofdm(16, 1.0);
    const CommChannel hf = assemble_comm_channel(random_paths(2, rng, 40e-9), {4, 0.5}, full);
    double signal = 0.0, noise = 0.0;
    for (int frame = 0; frame < 1600; ++frame) {  // 1600 x 4 x 16 > 1e5 samples
      const PilotFrame f = simulate_uplink_pilots(hf, full, 1.0, nv, 1000 + static_cast<std::uint64_t>(frame));
      for (Eigen::Index p = 0; p < f.rx_signal.cols(); ++p) {
        const CVector clean = f.tx_symbols(p) * hf.h.col(f.pilot_indices[static_cast<std::size_t>(p)]);
        noise += (f.rx_signal.col(p) - clean).squaredNorm();
        signal += std::norm(f.tx_symbols(p)) * 4;  // sigma_s^2 rho_u per element
      }
    }
    CHECK(10.0 * std::log10(signal / noise) == doctest::Approx(gamma0_db).epsilon(0.02));
  }
  SUBCASE("stacked vectors are subcarrier-major") {
    const PilotFrame f = simulate_uplink_pilots(h, ofdm, 1.0, 0.1, 4);
    const CVector y = f.stacked_rx(), s = f.stacked_pilots();
    CHECK(y(8 * 3 + 5) == f.rx_signal(5, 3));
    CHECK(s(8 * 3 + 5) == f.tx_symbols(3));
  }
}

TEST_CASE("constellations have unit average power") {
  for (auto c : {Constellation::qpsk, Constellation::qam16}) {
    const auto pts = constellation_points(c);
    double p = 0.0;
    for (const auto& z : pts) p += std::norm(z);
    CHECK(p / static_cast<double>(pts.size()) == doctest::Approx(1.0));
  }
}

// Copyright 2026 The MFM Mapper Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.


#include <doctest.h>

#include <cmath>
#include <numeric>

#include "mfm/errors.hpp"
#include "mfm/metrics.hpp"
#include "mfm/trainer.hpp"
#include "support.hpp"

using namespace mfm;
using mfm::testing::TempDir;

namespace {

Eigen::MatrixXd normal_draws(int n, int d, std::uint64_t seed, double stddev = 1.0) {
  Rng rng(seed);
  Eigen::MatrixXd m(n, d);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = stddev * rng.normal();
  return m;
}

// Row-normalized positive draws.
Eigen::MatrixXd random_posteriors(int n, int k, std::uint64_t seed) {
  Rng rng(seed);
  Eigen::MatrixXd p(n, k);
  for (Eigen::Index i = 0; i < p.size(); ++i) p.data()[i] = rng.uniform(0.01, 1.0);
  for (int i = 0; i < n; ++i) p.row(i) /= p.row(i).sum();
  return p;
}

// Probabilities are floored at 1e-8 before the logs, as the metric does.
double fl(double v) { return std::max(v, 1e-8); }

double kl_oracle(const Eigen::MatrixXd& p, const Eigen::MatrixXd& q) {
  double s = 0;
  for (int i = 0; i < p.rows(); ++i) {
    for (int k = 0; k < p.cols(); ++k) s += fl(p(i, k)) * std::log(fl(p(i, k)) / fl(q(i, k)));
  }
  return s / p.rows();
}

double is_oracle(const Eigen::MatrixXd& p) {
  std::vector<double> marg(p.cols(), 0.0);
  for (int i = 0; i < p.rows(); ++i) {
    for (int k = 0; k < p.cols(); ++k) marg[k] += p(i, k) / p.rows();
  }
  double s = 0;
  for (int i = 0; i < p.rows(); ++i) {
    for (int k = 0; k < p.cols(); ++k) s += fl(p(i, k)) * std::log(fl(p(i, k)) / fl(marg[k]));
  }
  return std::exp(s / p.rows());
}

MatrixF stack_targets(const SplitData& s) {
  const int len = static_cast<int>(s.target.dims[1]);
  MatrixF m(static_cast<Eigen::Index>(s.size()) * len, s.target.dims[2]);
  for (std::size_t i = 0; i < s.size(); ++i) m.middleRows(static_cast<Eigen::Index>(i) * len, len) = s.target.item(i);
  return m;
}

std::vector<int> classes_of(const SplitData& s) {
  std::vector<int> out;
  for (const auto& e : s.scripts) out.push_back(e.events[0].class_id);
  return out;
}

}  // namespace

TEST_CASE("Frechet distance analytic cases") {
  const Eigen::MatrixXd a = normal_draws(10000, 2, 1);
  CHECK(std::abs(frechet_distance(a, a)) <= 1e-6);

  Eigen::MatrixXd b = normal_draws(10000, 2, 2);
  b.col(0).array() += 3.0;
  b.col(1).array() += 4.0;
  CHECK(frechet_distance(a, b) == doctest::Approx(25.0).epsilon(0.02));
  CHECK(std::abs(frechet_distance(a, b) - frechet_distance(b, a)) <= 1e-6);

  const Eigen::MatrixXd wide = normal_draws(10000, 1, 3, 2.0);
  const Eigen::MatrixXd narrow = normal_draws(10000, 1, 4, 1.0);
  CHECK(frechet_distance(wide, narrow) == doctest::Approx(1.0).epsilon(0.05));

  // Correlated 3-d populations: FD stays symmetric and non-negative.
  Eigen::MatrixXd c = normal_draws(500, 3, 5);
  c.col(2) += 0.8 * c.col(0);
  const Eigen::MatrixXd e = normal_draws(400, 3, 6, 0.5);
  CHECK(std::abs(frechet_distance(c, e) - frechet_distance(e, c)) <= 1e-6);
  CHECK(frechet_distance(c, e) >= -1e-6);

  CHECK_THROWS_AS(frechet_distance(a.topRows(1), b), ArgumentError);
  CHECK_THROWS_AS(frechet_distance(Eigen::MatrixXd(5, 0), Eigen::MatrixXd(5, 0)), ArgumentError);
  CHECK_THROWS_AS(frechet_distance(a, normal_draws(10, 3, 1)), ArgumentError);
}

TEST_CASE("probe separates noiseless desk targets") {
  const Dataset d = synthesize_dataset(WorldConfig::desk(), 8, 300);
  const MatrixF c = stack_targets(d.test);
  const std::vector<int> y = classes_of(d.test);
  const Eigen::MatrixXd pooled = mean_pool(c, 8);

  // Closed-form decoder: argmax_k <pooled, q_k> is already perfect.
  const Eigen::MatrixXd scores = pooled * d.prototypes.audio.cast<double>().transpose();
  for (int i = 0; i < pooled.rows(); ++i) {
    Eigen::Index k;
    scores.row(i).maxCoeff(&k);
    REQUIRE(k == y[i]);
  }

  const ProbeParams probe = train_probe(c, 8, y, 8);
  CHECK(probe.num_classes() == 8);
  CHECK(probe_accuracy(probe, pooled, y) == 1.0);
  const Eigen::MatrixXd post = probe_posteriors(probe, pooled);
  CHECK((post.rowwise().sum().array() - 1.0).abs().maxCoeff() < 1e-12);

  std::vector<int> missing = y;
  std::replace(missing.begin(), missing.end(), 3, 2);
  CHECK_THROWS_AS(train_probe(c, 8, missing, 8), ConfigError);
}

TEST_CASE("probe on a two-class toy and on shuffled labels") {
  Eigen::MatrixXd x(40, 4);
  std::vector<int> y(40);
  Rng rng(3);
  for (int i = 0; i < 40; ++i) {
    y[i] = i % 2;
    x.row(i).setZero();
    x(i, y[i]) = rng.uniform(0.5, 1.0);
  }
  CHECK(probe_accuracy(train_probe(x, y, 2), x, y) == 1.0);

  // Labels unrelated to inputs: held-out accuracy near chance.
  const int n = 2000, k = 4;
  const Eigen::MatrixXd train = normal_draws(n, 6, 11);
  const Eigen::MatrixXd test = normal_draws(n, 6, 12);
  std::vector<int> ytr(n), yte(n);
  for (int i = 0; i < n; ++i) {
    ytr[i] = static_cast<int>(rng.below(k));
    yte[i] = static_cast<int>(rng.below(k));
  }
  const double acc = probe_accuracy(train_probe(train, ytr, k), test, yte);
  CHECK(std::abs(acc - 1.0 / k) <= 0.1);
}

TEST_CASE("KL and IS against direct summation") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const Eigen::MatrixXd p = random_posteriors(7, 5, seed);
    const Eigen::MatrixXd q = random_posteriors(7, 5, seed + 100);
    CHECK(std::abs(kl_from_posteriors(p, q) - kl_oracle(p, q)) <= 1e-12);
    CHECK(std::abs(is_from_posteriors(p) - is_oracle(p)) <= 1e-9);
    CHECK(kl_from_posteriors(p, q) >= 0.0);
    CHECK(kl_from_posteriors(p, p) == doctest::Approx(0.0));
  }
  const Eigen::MatrixXd same = Eigen::MatrixXd::Constant(6, 4, 0.25);
  CHECK(is_from_posteriors(same) == doctest::Approx(1.0));
  CHECK(is_from_posteriors(Eigen::MatrixXd::Identity(4, 4)) == doctest::Approx(4.0).epsilon(1e-6));

  // Near one-hot truth against uniform predictions: about log K.
  Eigen::MatrixXd hot = Eigen::MatrixXd::Constant(4, 4, 1e-9);
  for (int i = 0; i < 4; ++i) hot(i, i) = 1.0;
  CHECK(kl_from_posteriors(hot, same.topRows(4)) == doctest::Approx(std::log(4.0)).epsilon(1e-6));

  CHECK_THROWS_AS(kl_from_posteriors(same, hot.topRows(2)), ArgumentError);
  CHECK_THROWS_AS(is_from_posteriors(Eigen::MatrixXd(0, 4)), ArgumentError);
}

TEST_CASE("KL and IS through the probe") {
  const Dataset d = synthesize_dataset(WorldConfig::desk(), 8, 200);
  const MatrixF c = stack_targets(d.test);
  const ProbeParams probe = train_probe(c, 8, classes_of(d.test), 8);
  CHECK(std::abs(kl_metric(probe, c, c, 8)) <= 1e-9);
  const double is = is_metric(probe, c, 8);
  CHECK(is >= 1.0 - 1e-6);
  CHECK(is <= 8.0 + 1e-9);
  CHECK(is > 4.0);
  const Eigen::MatrixXd pt = probe_posteriors(probe, mean_pool(c, 8));
  MatrixF shifted = c;
  shifted.array() += 0.3f;
  const Eigen::MatrixXd pp = probe_posteriors(probe, mean_pool(shifted, 8));
  CHECK(kl_metric(probe, c, shifted, 8) == doctest::Approx(kl_oracle(pt, pp)).epsilon(1e-9));
  CHECK(is_metric(probe, shifted, 8) == doctest::Approx(is_oracle(pp)).epsilon(1e-9));
  CHECK_THROWS_AS(kl_metric(probe, c, c.topRows(8), 8), ArgumentError);
}

TEST_CASE("alignment score cases") {
  const Dataset d = synthesize_dataset(WorldConfig::desk(), 8, 50);
  const MatrixF c = stack_targets(d.test);
  const std::vector<int> y = classes_of(d.test);
  const MatrixF& q = d.prototypes.audio;
  CHECK(alignment_score(c, 8, y, q) == doctest::Approx(1.0).epsilon(1e-6));
  const MatrixF base = d.prototypes.baseline.replicate(c.rows(), 1);
  CHECK(std::abs(alignment_score(base, 8, y, q)) <= 1e-6);
  // Negated event rows, baseline elsewhere.
  MatrixF neg = base;
  for (std::size_t i = 0; i < d.test.size(); ++i) {
    const int w = onset_window(d.world(), d.test.scripts[i].events[0].onset_s);
    neg.row(static_cast<Eigen::Index>(i) * 8 + w) = -c.row(static_cast<Eigen::Index>(i) * 8 + w);
  }
  CHECK(alignment_score(neg.topRows(8), 8, std::span(y).first(1), q) == doctest::Approx(0.0).epsilon(1e-6));
  // Max over windows: -1 needs every window pointing away from q_k.
  MatrixF all_neg(c.rows(), c.cols());
  for (std::size_t i = 0; i < y.size(); ++i) {
    all_neg.middleRows(static_cast<Eigen::Index>(i) * 8, 8) = (-0.7f * q.row(y[i])).replicate(8, 1);
  }
  CHECK(alignment_score(all_neg, 8, y, q) == doctest::Approx(-1.0).epsilon(1e-6));
  MatrixF zero = MatrixF::Zero(8, 32);
  const int k0[] = {0};
  CHECK(alignment_score(zero, 8, k0, q) == 0.0);
  const int bad[] = {8};
  CHECK_THROWS_AS(alignment_score(zero, 8, bad, q), ArgumentError);
}

TEST_CASE("desync cases") {
  const Dataset d = synthesize_dataset(WorldConfig::desk(), 8, 100);
  const MatrixF c = stack_targets(d.test);
  const MatrixF& q = d.prototypes.audio;
  const auto& scripts = d.test.scripts;
  CHECK(desync_metric(c, 8, scripts, d.world(), q) == 0.0);

  // Shift every event one window later where possible, earlier otherwise.
  MatrixF late = d.prototypes.baseline.replicate(c.rows(), 1);
  for (std::size_t i = 0; i < scripts.size(); ++i) {
    const auto& e = scripts[i].events[0];
    const int w = onset_window(d.world(), e.onset_s);
    const int moved = w < 7 ? w + 1 : w - 1;
    late.row(static_cast<Eigen::Index>(i) * 8 + moved) = q.row(e.class_id);
  }
  CHECK(desync_metric(late, 8, scripts, d.world(), q) == doctest::Approx(1.25));

  // Ties go to the lowest index.
  const int k[] = {2};
  CHECK(decode_event_windows(MatrixF::Zero(8, 32), 8, k, q) == std::vector<int>{0});

  std::vector<EventScript> multi = {scripts[0]};
  multi[0].events.push_back({9.0, 1, 0.5});
  CHECK_THROWS_AS(single_event_classes(multi), ArgumentError);
}

TEST_CASE("desync of uniform-random predictions matches the grid expectation") {
  // Expected |w_hat - w| for independent uniform windows over an 8 x 8 grid.
  double expect = 0.0;
  for (int a = 0; a < 8; ++a) {
    for (int b = 0; b < 8; ++b) expect += std::abs(a - b) / 64.0;
  }
  CHECK(expect == doctest::Approx(2.625));
  const double expect_s = expect * 1.25;

  const Dataset d = synthesize_dataset(WorldConfig::desk(), 8, 500);
  Rng rng(123);
  MatrixF rnd(500 * 8, 32);
  for (Eigen::Index i = 0; i < rnd.size(); ++i) rnd.data()[i] = static_cast<float>(rng.normal());
  const double got = desync_metric(rnd, 8, d.test.scripts, d.world(), d.prototypes.audio);
  MESSAGE("random desync " << got << " s, grid expectation " << expect_s << " s");
  CHECK(std::abs(got - expect_s) <= 0.3);
  CHECK(got >= 0.0);
  CHECK(got <= 8.75);
}

TEST_CASE("evaluate on an oracle copy and on the mean predictor") {
  TempDir dir("eval");
  const WorldConfig w = WorldConfig::desk();
  generate_dataset(w, 400, 200, dir / "data");
  const Dataset d = load_dataset(dir / "data");
  const MatrixF c = stack_targets(d.test);

  const EvalReport perfect = evaluate_predictions(c, d);
  CHECK(perfect.n_samples == 200);
  CHECK(perfect.mse == 0.0);
  CHECK(perfect.fd <= 1e-4);
  CHECK(perfect.kl <= 1e-6);
  CHECK(perfect.alignment == doctest::Approx(1.0).epsilon(1e-6));
  CHECK(perfect.desync_s == 0.0);
  CHECK(perfect.seeds == std::vector<std::uint64_t>{17});

  const MatrixF mean = mean_target(d.train);
  const MatrixF mp = mean.replicate(200, 1);
  const EvalReport base = evaluate_predictions(mp, d);
  MESSAGE("mean-predictor alignment " << base.alignment << " mse " << base.mse);
  CHECK(base.mse == doctest::Approx(mean_predictor_mse(d)).epsilon(1e-6));
  // Regression value from the mean-predictor run on this dataset.
  CHECK(base.alignment == doctest::Approx(0.044455).epsilon(1e-4));
  CHECK(base.is_score == doctest::Approx(1.0).epsilon(1e-6));

  // File path: write predictions, evaluate, read the report back.
  Tensor pred({200, 8, 32});
  for (int i = 0; i < 200; ++i) pred.set_item(static_cast<std::size_t>(i), c.middleRows(i * 8, 8));
  write_tensor(pred, dir / "pred.mfmt");
  const EvalReport r = evaluate(dir / "pred.mfmt", dir / "data", dir / "out");
  CHECK(r == perfect);
  const EvalReport back = nlohmann::json::parse(read_file(dir / "out" / "report.json")).get<EvalReport>();
  CHECK(back == r);
  const std::string csv = read_file(dir / "out" / "report.csv");
  CHECK(csv == report_csv_header() + "\n" + report_csv_row(r) + "\n");

  write_tensor(Tensor({200, 8, 31}), dir / "bad.mfmt");
  CHECK_THROWS_AS(evaluate(dir / "bad.mfmt", dir / "data", dir / "out2"), FormatError);

  CHECK(evaluate_predictions(c, d) == perfect);
}

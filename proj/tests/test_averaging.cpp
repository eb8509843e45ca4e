#include <catch2/catch_amalgamated.hpp>

#include <random>

#include "censavg/averaging.hpp"
#include "censavg/random.hpp"

using namespace censavg;

namespace {

SurvivalDataset dataset_from(const Eigen::MatrixXd& x, const Eigen::VectorXd& y) {
    return SurvivalDataset(y, Eigen::VectorXi::Ones(y.size()), x);
}

struct Instance {
    SurvivalDataset data;
    WeightVector w;
    std::vector<int> idx;
};

Instance random_instance(int n, int p, std::mt19937_64& rng, double zero_frac = 0.2) {
    std::normal_distribution<double> normal(0.0, 1.0);
    std::uniform_real_distribution<double> unif(1.0, 3.0);
    std::uniform_real_distribution<double> coin(0.0, 1.0);
    Eigen::MatrixXd x(n, p);
    Eigen::VectorXd y(n);
    Eigen::VectorXd pi(n);
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < p; ++j) x(i, j) = normal(rng);
        y(i) = normal(rng);
        pi(i) = coin(rng) < zero_frac ? 0.0 : unif(rng);
    }
    std::vector<int> idx(static_cast<std::size_t>(p));
    std::iota(idx.begin(), idx.end(), 0);
    return Instance{dataset_from(x, y), WeightVector{pi}, idx};
}

// Frozen-weight leave-one-out refit: drop observation j, keep every other
// weight at its full-data value, fit, predict row j.
double loo_refit_prediction(const Instance& inst, int drop) {
    const Eigen::Index n = inst.data.n();
    const int p = static_cast<int>(inst.idx.size());
    Eigen::MatrixXd x(n - 1, p);
    Eigen::VectorXd y(n - 1), pi(n - 1);
    Eigen::Index r = 0;
    for (Eigen::Index i = 0; i < n; ++i) {
        if (i == drop) continue;
        x.row(r) = inst.data.covariates.row(i);
        y(r) = inst.data.times(i);
        pi(r) = inst.w.pi(i);
        ++r;
    }
    auto fit = wls_fit(dataset_from(x, y), WeightVector{pi}, inst.idx);
    return inst.data.covariates.row(drop).head(p).dot(fit.beta);
}

AveragingProblem random_problem(int n, int k, std::mt19937_64& rng) {
    std::normal_distribution<double> normal(0.0, 1.0);
    std::uniform_real_distribution<double> unif(0.5, 2.0);
    Eigen::MatrixXd e(n, k);
    Eigen::VectorXd y(n), pi(n);
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < k; ++j) e(i, j) = normal(rng);
        y(i) = normal(rng);
        pi(i) = unif(rng);
    }
    AveragingProblem prob;
    prob.deleteone_preds = e;
    prob.gram = e.transpose() * pi.asDiagonal() * e;
    prob.linear = e.transpose() * (pi.array() * y.array()).matrix();
    prob.constant = y.dot((pi.array() * y.array()).matrix());
    return prob;
}

double box_grid_minimum(const AveragingProblem& prob, double step = 0.01) {
    const int m = static_cast<int>(std::lround(1.0 / step));
    double best = std::numeric_limits<double>::infinity();
    Eigen::VectorXd omega(3);
    for (int a = 0; a <= m; ++a)
        for (int b = 0; b <= m; ++b)
            for (int c = 0; c <= m; ++c) {
                omega << a * step, b * step, c * step;
                best = std::min(best, prob.criterion(omega));
            }
    return best;
}

double simplex_grid_minimum(const AveragingProblem& prob, double step = 0.01) {
    const int m = static_cast<int>(std::lround(1.0 / step));
    double best = std::numeric_limits<double>::infinity();
    Eigen::VectorXd omega(3);
    for (int a = 0; a <= m; ++a)
        for (int b = 0; a + b <= m; ++b) {
            const int c = m - a - b;
            omega << a * step, b * step, c * step;
            best = std::min(best, prob.criterion(omega));
        }
    return best;
}

}  // namespace

TEST_CASE("deleteone_matrix with a zero diagonal is the hat matrix itself") {
    Eigen::MatrixXd h(3, 3);
    h << 0, 0.2, 0.1, 0.3, 0, 0.4, 0.1, 0.2, 0;
    Eigen::VectorXd diag = Eigen::VectorXd::Zero(3);
    CHECK((deleteone_matrix(h, diag) - h).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("delete-one predictions equal OLS leave-one-out refits") {
    auto rng = make_rng(101);
    auto inst = random_instance(25, 3, rng, 0.0);
    inst.w.pi = Eigen::VectorXd::Ones(25);
    auto fit = wls_fit(inst.data, inst.w, inst.idx);
    auto tilde = deleteone_predictions(fit, inst.data.response());
    for (int j = 0; j < 25; ++j)
        CHECK(tilde(j) == Catch::Approx(loo_refit_prediction(inst, j)).margin(1e-9));
}

TEST_CASE("delete-one predictions equal frozen-weight leave-one-out refits") {
    auto rng = make_rng(103);
    for (int trial = 0; trial < 5; ++trial) {
        auto inst = random_instance(30, 4, rng, 0.25);
        auto fit = wls_fit(inst.data, inst.w, inst.idx);
        auto tilde = deleteone_predictions(fit, inst.data.response());
        for (int j = 0; j < 30; ++j)
            CHECK(tilde(j) == Catch::Approx(loo_refit_prediction(inst, j)).margin(1e-8));
    }
}

TEST_CASE("delete-one matrix and closed form agree") {
    auto rng = make_rng(107);
    auto inst = random_instance(20, 3, rng);
    auto fit = wls_fit(inst.data, inst.w, inst.idx);
    auto h = hat_matrix(inst.data, inst.w, inst.idx);
    auto tilde_matrix = deleteone_matrix(h, h.diagonal());
    Eigen::VectorXd via_matrix = tilde_matrix * inst.data.response();
    Eigen::VectorXd closed = deleteone_predictions(fit, inst.data.response());
    CHECK((via_matrix - closed).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("leverage-one observations are rejected with the row named") {
    // single observation with nonzero weight: its leverage is exactly 1
    Eigen::MatrixXd x(2, 1);
    x << 1, 1;
    Eigen::VectorXd y(2);
    y << 1, 2;
    auto data = dataset_from(x, y);
    WeightVector w{Eigen::VectorXd(2)};
    w.pi << 1.0, 0.0;
    const std::vector<int> idx{0};
    auto fit = wls_fit(data, w, idx);
    try {
        deleteone_predictions(fit, data.response());
        FAIL("expected leverage-one error");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::leverage_one);
        CHECK(std::string(e.what()).find("observation 0") != std::string::npos);
    }
}

TEST_CASE("build_problem reproduces the quadratic expansion for K = 1") {
    auto rng = make_rng(109);
    auto inst = random_instance(15, 2, rng);
    auto fit = wls_fit(inst.data, inst.w, inst.idx);
    auto prob = build_problem({fit}, inst.data, inst.w);

    const Eigen::VectorXd y = inst.data.response();
    const Eigen::VectorXd e = deleteone_predictions(fit, y);
    const double a = (e.array() * inst.w.pi.array() * e.array()).sum();
    const double b = (e.array() * inst.w.pi.array() * y.array()).sum();
    const double c = (y.array() * inst.w.pi.array() * y.array()).sum();
    CHECK(prob.gram(0, 0) == Catch::Approx(a).epsilon(1e-13));
    CHECK(prob.linear(0) == Catch::Approx(b).epsilon(1e-13));
    CHECK(prob.constant == Catch::Approx(c).epsilon(1e-13));

    // M(w) = (Y - Ew)' Pi (Y - Ew) for a probe weight
    Eigen::VectorXd omega(1);
    omega << 0.37;
    const Eigen::VectorXd resid = y - e * omega(0);
    const double direct = resid.dot((inst.w.pi.array() * resid.array()).matrix());
    CHECK(prob.criterion(omega) == Catch::Approx(direct).epsilon(1e-12));
}

TEST_CASE("criterion at zero weights is the weighted response norm") {
    auto rng = make_rng(113);
    auto inst = random_instance(12, 2, rng);
    auto fit = wls_fit(inst.data, inst.w, inst.idx);
    auto prob = build_problem({fit}, inst.data, inst.w);
    CHECK(prob.criterion(Eigen::VectorXd::Zero(1)) == prob.constant);
}

TEST_CASE("duplicated candidate models make the criterion depend on the weight sum") {
    auto rng = make_rng(127);
    auto inst = random_instance(18, 2, rng);
    auto fit = wls_fit(inst.data, inst.w, inst.idx);
    auto prob = build_problem({fit, fit}, inst.data, inst.w);
    CHECK((prob.gram.row(0) - prob.gram.row(1)).cwiseAbs().maxCoeff() < 1e-12);

    Eigen::VectorXd u(2), v(2), s(2);
    u << 0.3, 0.5;
    v << 0.5, 0.3;
    s << 0.8, 0.0;
    CHECK(prob.criterion(u) == Catch::Approx(prob.criterion(v)).epsilon(1e-12));
    CHECK(prob.criterion(u) == Catch::Approx(prob.criterion(s)).epsilon(1e-12));
}

TEST_CASE("box solver: scalar problems clamp the unconstrained optimum") {
    AveragingProblem prob;
    prob.deleteone_preds = Eigen::MatrixXd::Zero(1, 1);
    prob.gram = Eigen::MatrixXd::Constant(1, 1, 2.0);
    prob.constant = 5.0;

    prob.linear = Eigen::VectorXd::Constant(1, 1.0);  // optimum 0.5, interior
    CHECK(optimize_weights_box(prob).omega(0) == Catch::Approx(0.5).margin(1e-12));
    prob.linear = Eigen::VectorXd::Constant(1, 10.0);  // optimum 5, clamped to 1
    CHECK(optimize_weights_box(prob).omega(0) == 1.0);
    prob.linear = Eigen::VectorXd::Constant(1, -3.0);  // optimum negative, clamped to 0
    CHECK(optimize_weights_box(prob).omega(0) == 0.0);
}

TEST_CASE("box solver matches exhaustive grid search on K = 3 problems") {
    auto rng = make_rng(131);
    for (int trial = 0; trial < 10; ++trial) {
        auto prob = random_problem(25, 3, rng);
        auto sol = optimize_weights_box(prob);
        const double grid = box_grid_minimum(prob);
        CHECK(sol.criterion_value <=
              grid + 1e-4 * (1.0 + std::abs(sol.criterion_value)));
        CHECK(sol.kkt_residual <= 1e-8);
        CHECK(sol.omega.minCoeff() >= 0.0);
        CHECK(sol.omega.maxCoeff() <= 1.0);
    }
}

TEST_CASE("box solver: duplicated models reach the single-model optimum") {
    auto rng = make_rng(137);
    auto inst = random_instance(20, 2, rng);
    auto fit = wls_fit(inst.data, inst.w, inst.idx);
    auto single = optimize_weights_box(build_problem({fit}, inst.data, inst.w));
    auto doubled = optimize_weights_box(build_problem({fit, fit}, inst.data, inst.w));
    CHECK(doubled.criterion_value ==
          Catch::Approx(single.criterion_value).epsilon(1e-10));
}

TEST_CASE("box solver fixes zero-curvature coordinates at zero") {
    AveragingProblem prob;
    prob.gram = Eigen::MatrixXd::Zero(2, 2);
    prob.gram(0, 0) = 2.0;
    prob.linear = Eigen::VectorXd::Zero(2);
    prob.linear(0) = 1.0;
    prob.deleteone_preds = Eigen::MatrixXd::Zero(1, 2);
    prob.constant = 1.0;
    auto sol = optimize_weights_box(prob);
    CHECK(sol.omega(0) == Catch::Approx(0.5).margin(1e-12));
    CHECK(sol.omega(1) == 0.0);
}

TEST_CASE("simplex solver: K = 1 returns the unit weight") {
    AveragingProblem prob;
    prob.deleteone_preds = Eigen::MatrixXd::Zero(1, 1);
    prob.gram = Eigen::MatrixXd::Constant(1, 1, 3.0);
    prob.linear = Eigen::VectorXd::Constant(1, 0.3);
    prob.constant = 2.0;
    auto sol = optimize_weights_simplex(prob);
    REQUIRE(sol.omega.size() == 1);
    CHECK(sol.omega(0) == 1.0);
}

TEST_CASE("simplex solver matches simplex grid search on K = 3 problems") {
    auto rng = make_rng(139);
    for (int trial = 0; trial < 10; ++trial) {
        auto prob = random_problem(25, 3, rng);
        auto sol = optimize_weights_simplex(prob);
        const double grid = simplex_grid_minimum(prob);
        CHECK(sol.criterion_value <=
              grid + 1e-4 * (1.0 + std::abs(sol.criterion_value)));
        CHECK(sol.omega.minCoeff() >= -1e-15);
        CHECK(sol.omega.sum() == Catch::Approx(1.0).margin(1e-10));
    }
}

TEST_CASE("simplex solver: duplicated models match the concentrated weight") {
    auto rng = make_rng(149);
    auto inst = random_instance(20, 2, rng);
    auto fit = wls_fit(inst.data, inst.w, inst.idx);
    auto prob = build_problem({fit, fit}, inst.data, inst.w);
    auto sol = optimize_weights_simplex(prob);
    Eigen::VectorXd concentrated(2);
    concentrated << 1.0, 0.0;
    CHECK(sol.criterion_value ==
          Catch::Approx(prob.criterion(concentrated)).epsilon(1e-10));
}

TEST_CASE("box optimum never exceeds the simplex optimum or any vertex") {
    auto rng = make_rng(151);
    for (int trial = 0; trial < 10; ++trial) {
        auto prob = random_problem(30, 4, rng);
        auto box = optimize_weights_box(prob);
        auto simplex = optimize_weights_simplex(prob);
        CHECK(box.criterion_value <= simplex.criterion_value + 1e-10);
        for (int k = 0; k < 4; ++k) {
            Eigen::VectorXd vertex = Eigen::VectorXd::Zero(4);
            vertex(k) = 1.0;
            CHECK(box.criterion_value <= prob.criterion(vertex) + 1e-10);
        }
    }
}

TEST_CASE("info criterion weights: identical models share weight uniformly") {
    auto rng = make_rng(157);
    auto inst = random_instance(15, 2, rng);
    auto fit = wls_fit(inst.data, inst.w, inst.idx);
    auto sol = info_criterion_weights({fit, fit, fit}, inst.data, inst.w,
                                      InfoCriterion::aic);
    for (int k = 0; k < 3; ++k)
        CHECK(sol.omega(k) == Catch::Approx(1.0 / 3.0).margin(1e-14));
}

TEST_CASE("info criterion weights: a 60-point gap concentrates the weight") {
    // fabricated fits with controlled weighted RSS: IC gap = n log(R1/R0)
    const int n = 10;
    Eigen::VectorXd y = Eigen::VectorXd::LinSpaced(n, 1, n);
    auto data = dataset_from(Eigen::MatrixXd::Zero(n, 1), y);
    WeightVector w{Eigen::VectorXd::Ones(n)};

    CandidateFit good, bad;
    good.index_set = {0};
    bad.index_set = {0};
    good.fitted = y.array() - 1.0;              // RSS = n
    bad.fitted = y.array() - std::exp(3.5);     // RSS = n e^7, gap = 70
    auto sol = info_criterion_weights({good, bad}, data, w, InfoCriterion::aic);
    CHECK(sol.omega(0) >= 1.0 - 1e-12);
}

TEST_CASE("info criterion weights: gap of 2 log 2 gives weights (2/3, 1/3)") {
    const int n = 10;
    Eigen::VectorXd y = Eigen::VectorXd::LinSpaced(n, 1, n);
    auto data = dataset_from(Eigen::MatrixXd::Zero(n, 1), y);
    WeightVector w{Eigen::VectorXd::Ones(n)};

    CandidateFit first, second;
    first.index_set = {0};
    second.index_set = {0};
    first.fitted = y.array() - 1.0;  // RSS = n
    // RSS ratio 2^(2/n) makes the AIC gap exactly 2 log 2
    second.fitted = y.array() - std::pow(2.0, 1.0 / n);
    auto sol = info_criterion_weights({second, first}, data, w, InfoCriterion::aic);
    CHECK(sol.omega(1) == Catch::Approx(2.0 / 3.0).margin(1e-12));
    CHECK(sol.omega(0) == Catch::Approx(1.0 / 3.0).margin(1e-12));
}

TEST_CASE("bic uses the log-n penalty") {
    const int n = 20;
    Eigen::VectorXd y = Eigen::VectorXd::LinSpaced(n, 1, n);
    auto data = dataset_from(Eigen::MatrixXd::Zero(n, 2), y);
    WeightVector w{Eigen::VectorXd::Ones(n)};

    CandidateFit small, large;
    small.index_set = {0};
    large.index_set = {0, 1};
    small.fitted = y.array() - 1.0;
    large.fitted = y.array() - 1.0;  // same RSS, one extra parameter
    auto sol = info_criterion_weights({small, large}, data, w, InfoCriterion::bic);
    const double expected_ratio = std::exp(std::log(static_cast<double>(n)) / 2.0);
    CHECK(sol.omega(0) / sol.omega(1) == Catch::Approx(expected_ratio).epsilon(1e-12));
}

TEST_CASE("zero residual sum of squares raises infinite-fit") {
    const int n = 5;
    Eigen::VectorXd y = Eigen::VectorXd::LinSpaced(n, 1, n);
    auto data = dataset_from(Eigen::MatrixXd::Zero(n, 1), y);
    WeightVector w{Eigen::VectorXd::Ones(n)};
    CandidateFit perfect;
    perfect.index_set = {0};
    perfect.fitted = y;
    try {
        info_criterion_weights({perfect}, data, w, InfoCriterion::aic);
        FAIL("expected infinite-fit error");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::infinite_fit);
    }
}

TEST_CASE("average_predict combines restricted predictions") {
    auto rng = make_rng(163);
    std::normal_distribution<double> normal(0.0, 1.0);
    const int n = 30, p = 6, m = 5;
    Eigen::MatrixXd x(n, p), x_new(m, p);
    Eigen::VectorXd y(n);
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < p; ++j) x(i, j) = normal(rng);
        y(i) = normal(rng);
    }
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < p; ++j) x_new(i, j) = normal(rng);
    auto data = dataset_from(x, y);
    WeightVector w{Eigen::VectorXd::Ones(n)};

    const std::vector<int> a0{0, 1}, a1{2, 3}, a2{4, 5};
    std::vector<CandidateFit> fits{wls_fit(data, w, a0), wls_fit(data, w, a1),
                                   wls_fit(data, w, a2)};

    Eigen::VectorXd unit = Eigen::VectorXd::Zero(3);
    unit(1) = 1.0;
    Eigen::MatrixXd restricted(m, 2);
    restricted.col(0) = x_new.col(2);
    restricted.col(1) = x_new.col(3);
    CHECK((average_predict(fits, unit, x_new) - predict(fits[1], restricted))
              .cwiseAbs()
              .maxCoeff() < 1e-14);

    CHECK(average_predict(fits, Eigen::VectorXd::Zero(3), x_new).cwiseAbs().maxCoeff() ==
          0.0);

    Eigen::VectorXd omega(3);
    omega << 0.2, 0.5, 0.9;
    Eigen::VectorXd expected = Eigen::VectorXd::Zero(m);
    for (int k = 0; k < 3; ++k) {
        Eigen::MatrixXd sub(m, 2);
        for (std::size_t c = 0; c < fits[static_cast<std::size_t>(k)].index_set.size(); ++c)
            sub.col(static_cast<Eigen::Index>(c)) =
                x_new.col(fits[static_cast<std::size_t>(k)].index_set[c]);
        expected += omega(k) * (sub * fits[static_cast<std::size_t>(k)].beta);
    }
    CHECK((average_predict(fits, omega, x_new) - expected).cwiseAbs().maxCoeff() < 1e-12);

    Eigen::VectorXd wrong(2);
    wrong << 0.5, 0.5;
    CHECK_THROWS_AS(average_predict(fits, wrong, x_new), Error);
}

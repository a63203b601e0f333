#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include <critforge/cylinder.hpp>

namespace {

// Extended-precision I0 oracle (plain series, compensated long double).
long double i0_oracle(long double x) {
    const long double q = 0.25L * x * x;
    critforge::KahanSum<long double> s;
    s.add(1.0L);
    long double term = 1.0L;
    for (int m = 1; m < 4000; ++m) {
        term *= q / (static_cast<long double>(m) * static_cast<long double>(m));
        s.add(term);
        if (term < 1e-24L * s.value())
            break;
    }
    return s.value();
}

// Extended-precision lambda = (2 pi / H^2) sum_k (-1)^k (2k+1) / I0(mu_k a).
long double lambda_oracle(long double H, long double a) {
    critforge::KahanSum<long double> s;
    for (int k = 0; k < 800; ++k) {
        const long double odd = 2.0L * k + 1.0L;
        const long double term =
            (k % 2 == 0 ? 1.0L : -1.0L) * odd / i0_oracle(odd * M_PIl * a / H);
        if (std::fabs(term) < 1e-26L * std::fabs(s.value()) && k > 4)
            break;
        s.add(term);
    }
    return 2.0L * M_PIl / (H * H) * s.value();
}

critforge::SeriesSolution reference_series(int K = 200) {
    return critforge::coefficients(critforge::CylinderSpec{4.0, 1.0, K});
}

// 5-point residual of the meridian-plane Laplacian u_rr + u_r/r + u_zz.
double max_laplacian_residual(const critforge::SeriesSolution& s, double h) {
    double worst = 0.0;
    for (double r = 0.1; r <= 0.9 + 1e-12; r += h) {
        for (double z = -1.8; z <= 1.8 + 1e-12; z += h) {
            const double u0 = critforge::eval_u(s, r, z);
            const double urr =
                (critforge::eval_u(s, r + h, z) - 2.0 * u0 + critforge::eval_u(s, r - h, z)) /
                (h * h);
            const double ur =
                (critforge::eval_u(s, r + h, z) - critforge::eval_u(s, r - h, z)) / (2.0 * h);
            const double uzz =
                (critforge::eval_u(s, r, z + h) - 2.0 * u0 + critforge::eval_u(s, r, z - h)) /
                (h * h);
            worst = std::max(worst, std::fabs(urr + ur / r + uzz));
        }
    }
    return worst;
}

}  // namespace

TEST_CASE("leading coefficient matches the extended-precision formula") {
    const critforge::SeriesSolution s = reference_series();
    const long double ref = 4.0L / (M_PIl * i0_oracle(M_PIl / 4.0L));
    CHECK(std::fabs(static_cast<long double>(s.coeffs[0]) - ref) <= 1e-14L * ref);
}

TEST_CASE("coefficients alternate and decay strictly") {
    for (double H : {1.0, 2.0, 4.0, 8.0}) {
        const critforge::SeriesSolution s =
            critforge::coefficients(critforge::CylinderSpec{H, 1.0, 200});
        REQUIRE(s.coeffs.size() >= 50);
        for (int k = 0; k < 50; ++k) {
            CHECK((k % 2 == 0) == (s.coeffs[k] > 0.0));
            if (k > 0)
                CHECK(std::fabs(s.coeffs[k]) < std::fabs(s.coeffs[k - 1]));
        }
        if (H == 1.0)  // deep modes underflow; storage truncates instead of zero-filling
            CHECK(s.coeffs.size() < 200);
    }
}

TEST_CASE("disk boundary value is reproduced exactly") {
    const critforge::SeriesSolution s = reference_series();
    for (double r : {0.0, 0.25, 0.7, 1.0}) {
        CHECK(critforge::eval_u(s, r, 2.0) == 1.0);
        CHECK(critforge::eval_u(s, r, -2.0) == 1.0);
    }
}

TEST_CASE("center value obeys the maximum principle") {
    const double v = critforge::eval_u(reference_series(), 0.0, 0.0);
    CHECK(v > 1.0);
    CHECK(v < 2.0);
}

TEST_CASE("evaluation outside the closed cylinder is rejected") {
    const critforge::SeriesSolution s = reference_series();
    CHECK_THROWS_AS(critforge::eval_u(s, 1.0 + 1e-12, 0.0), std::domain_error);
    CHECK_THROWS_AS(critforge::eval_u(s, 0.5, 2.0 + 1e-12), std::domain_error);
    CHECK_THROWS_AS(critforge::eval_u(s, -0.1, 0.0), std::domain_error);
}

TEST_CASE("saddle report matches the extended-precision lambda") {
    const critforge::SaddleReport rep = critforge::hessian_at_origin(reference_series());
    CHECK(rep.lambda > 0.0);
    CHECK(rep.saddle_certified);
    CHECK(rep.trace_residual <= 1e-8);
    CHECK(rep.hessian_diag[1] == rep.lambda);
    CHECK(rep.hessian_diag[2] == rep.lambda);
    const long double ref = lambda_oracle(4.0L, 1.0L);
    CHECK(std::fabs(static_cast<long double>(rep.lambda) - ref) <= 1e-12L * ref);
}

TEST_CASE("gradient vanishes identically at the origin") {
    const critforge::Vec3 g = critforge::eval_gradient(reference_series(), {0.0, 0.0, 0.0});
    CHECK(g.x == 0.0);
    CHECK(g.y == 0.0);
    CHECK(g.z == 0.0);
}

TEST_CASE("lambda scales as 1/4 when the cylinder doubles") {
    const critforge::SaddleReport base = critforge::hessian_at_origin(reference_series());
    const critforge::SaddleReport doubled =
        critforge::hessian_at_origin(critforge::coefficients(critforge::CylinderSpec{8.0, 2.0, 200}));
    CHECK(std::fabs(doubled.lambda - 0.25 * base.lambda) <= 1e-10 * base.lambda);
}

TEST_CASE("trace residual stays small across aspect ratios") {
    for (double H = 1.0; H <= 10.0 + 1e-9; H += 0.5) {
        const critforge::SaddleReport rep =
            critforge::hessian_at_origin(critforge::coefficients(critforge::CylinderSpec{H, 1.0, 200}));
        CHECK(rep.trace_residual <= 1e-8);
        CHECK(rep.saddle_certified);
    }
}

TEST_CASE("lambda sweep is strictly decreasing in H") {
    const std::vector<critforge::SweepRow> rows =
        critforge::lambda_sweep({1.0, 2.0, 4.0, 8.0}, 1.0, 200);
    REQUIRE(rows.size() == 4);
    for (std::size_t i = 1; i < rows.size(); ++i)
        CHECK(rows[i].lambda < rows[i - 1].lambda);
    for (const critforge::SweepRow& r : rows)
        CHECK(r.lambda > 0.0);
}

TEST_CASE("single-row sweep reproduces the saddle report bit for bit") {
    const std::vector<critforge::SweepRow> rows = critforge::lambda_sweep({4.0}, 1.0, 200);
    const critforge::SaddleReport rep = critforge::hessian_at_origin(reference_series());
    REQUIRE(rows.size() == 1);
    CHECK(rows[0].lambda == rep.lambda);
    CHECK(rows[0].trace_residual == rep.trace_residual);
}

TEST_CASE("empty sweep yields an empty table") {
    CHECK(critforge::lambda_sweep({}, 1.0, 200).empty());
}

TEST_CASE("sweep csv carries the pinned header") {
    const std::string csv = critforge::lambda_sweep_csv(critforge::lambda_sweep({4.0}, 1.0, 200));
    CHECK(csv.rfind("H,a,K,lambda,trace_residual\r\n", 0) == 0);
}

TEST_CASE("sphere samples certify the sign condition at radius one half") {
    const critforge::SphereSamples ss =
        critforge::gradient_on_cylinder_sphere(reference_series(), 0.5, 500);
    CHECK(ss.samples.size() == 500);
    CHECK(ss.min_normal_dot > 0.0);
}

TEST_CASE("sphere probe must stay inside the cylinder") {
    CHECK_THROWS_AS(critforge::gradient_on_cylinder_sphere(reference_series(), 1.0, 16),
                    std::domain_error);
}

TEST_CASE("axis samples follow the quadratic model to second order") {
    const critforge::SeriesSolution s = reference_series();
    const double lambda = critforge::hessian_at_origin(s).lambda;
    auto model_error = [&](double r) {
        double worst = 0.0;
        const critforge::Vec3 dirs[6] = {{1, 0, 0}, {-1, 0, 0}, {0, 1, 0},
                                         {0, -1, 0}, {0, 0, 1}, {0, 0, -1}};
        for (int i = 0; i < 6; ++i) {
            const critforge::Vec3 nu = dirs[i];
            const critforge::Vec3 g = critforge::eval_gradient(s, nu * r);
            const double nd = -nu.x * g.x + nu.y * g.y + nu.z * g.z;
            const double expected = (i < 2 ? 2.0 : 1.0) * lambda * r;
            worst = std::max(worst, std::fabs(nd - expected) / (lambda * r));
        }
        return worst;
    };
    const double e1 = model_error(0.02);
    const double e2 = model_error(0.04);
    CHECK(e1 <= 0.01);
    CHECK(e2 / e1 >= 2.5);
    CHECK(e2 / e1 <= 5.5);
}

TEST_CASE("normal dot is antipodally symmetric") {
    const critforge::SeriesSolution s = reference_series();
    for (const critforge::Vec3& p :
         {critforge::Vec3{0.3, 0.2, -0.1}, critforge::Vec3{-0.25, 0.33, 0.4},
          critforge::Vec3{0.0, 0.5, 0.1}}) {
        const critforge::Vec3 gp = critforge::eval_gradient(s, p);
        const critforge::Vec3 gm = critforge::eval_gradient(s, p * -1.0);
        const critforge::Vec3 nu = p / norm(p);
        const double nd_p = dot(nu, {-gp.x, gp.y, gp.z});
        const double nd_m = dot(nu * -1.0, {-gm.x, gm.y, gm.z});
        CHECK(nd_p == Catch::Approx(nd_m).epsilon(1e-13));
    }
}

TEST_CASE("discrete meridian Laplacian residual drops fourfold under refinement") {
    const critforge::SeriesSolution s =
        critforge::coefficients(critforge::CylinderSpec{4.0, 1.0, 120});
    const double coarse = max_laplacian_residual(s, 0.05);
    const double fine = max_laplacian_residual(s, 0.025);
    const double ratio = coarse / fine;
    CHECK(ratio >= 3.5);
    CHECK(ratio <= 4.5);
}

TEST_CASE("lateral boundary error decreases with truncation order") {
    // Pointwise the partial sums oscillate, so probe the sup over a dense grid
    // kept 0.2 away from the rim corners.
    double prev = INFINITY;
    for (int K : {25, 50, 100, 200}) {
        const critforge::SeriesSolution s =
            critforge::coefficients(critforge::CylinderSpec{4.0, 1.0, K});
        double err = 0.0;
        for (int i = 0; i <= 720; ++i) {
            const double z = -1.8 + 3.6 * i / 720.0;
            err = std::max(err, std::fabs(critforge::eval_u(s, 1.0, z) - 2.0));
        }
        CHECK(err < prev);
        prev = err;
    }
}

TEST_CASE("tail bound dominates the observed truncation remainder") {
    const critforge::SeriesSolution ref =
        critforge::coefficients(critforge::CylinderSpec{4.0, 1.0, 400});
    const critforge::SeriesSolution s =
        critforge::coefficients(critforge::CylinderSpec{4.0, 1.0, 30});
    for (double r : {0.0, 0.3, 0.6}) {
        for (double z : {0.0, 1.0, -1.7}) {
            const double remainder =
                std::fabs(critforge::eval_u(s, r, z) - critforge::eval_u(ref, r, z));
            const double bound = critforge::eval_tail_bound(s, r, z);
            CHECK(bound > 0.0);
            // geometric decay factor per mode at radius r, plus a rounding
            // floor: the two evaluations differ by a few ulps even when the
            // analytic remainder is far below machine precision
            const double q = std::exp(-2.0 * M_PI * (1.0 - r) / 4.0);
            CHECK(remainder <= bound / (1.0 - q) * 1.05 + 1e-14);
        }
    }
}

TEST_CASE("invalid cylinder specs are rejected") {
    CHECK_THROWS_AS(critforge::coefficients(critforge::CylinderSpec{0.0, 1.0, 10}),
                    std::domain_error);
    CHECK_THROWS_AS(critforge::coefficients(critforge::CylinderSpec{4.0, -1.0, 10}),
                    std::domain_error);
    CHECK_THROWS_AS(critforge::coefficients(critforge::CylinderSpec{4.0, 1.0, 0}),
                    std::domain_error);
}

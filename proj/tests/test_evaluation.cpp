#include "catch_amalgamated.hpp"

#include <filesystem>
#include <fstream>

#include "lilan/evaluation.hpp"
#include "support.hpp"

using namespace lilan;
using Catch::Approx;
namespace fs = std::filesystem;

namespace {

ErrorKind kind_of(const std::function<void()>& f) {
    try {
        f();
    } catch (const Error& e) {
        return e.kind();
    }
    FAIL("expected an error");
    return ErrorKind::Io;
}

const TrajectoryDataset& corners() {
    static const TrajectoryDataset ds = [] {
        const auto problem = robertson_problem(ParamSampling::Grid, 2);
        return generate(problem, 8, 0, problem.solver);
    }();
    return ds;
}

Architecture tiny_arch() {
    Architecture a = robertson_problem(ParamSampling::Grid, 2).architecture(Variant::Independent, 2);
    a.encoder_hidden = {6};
    a.tau_hidden = {6};
    a.decoder_hidden = {6};
    return a;
}

LiLaNModel tiny_model(std::uint64_t seed) {
    LiLaNModel m(tiny_arch(), seed);
    m.set_transforms(fit_transforms(corners(), TransformOptions::ode()));
    return m;
}

std::vector<std::string> read_lines(const fs::path& p) {
    std::ifstream in(p);
    std::vector<std::string> lines;
    for (std::string l; std::getline(in, l);)
        if (!l.empty()) lines.push_back(l);
    return lines;
}

}  // namespace

TEST_CASE("R1 and R2 on a hand-worked example", "[metrics]") {
    // Two samples, two times, two components.
    RowMatrix target(4, 2), pred(4, 2);
    target << 3, 4,   // sample 0, t0: norm 5
        1, 0,         // sample 0, t1
        0, 2,         // sample 1, t0
        6, 8;         // sample 1, t1: norm 10
    pred << 3, 4,     // exact
        1, 0.5,       // error 0.5
        0, 3,         // error 1 -> 0.5
        6, 7;         // error 1 -> 0.1
    CHECK(metric_r1(pred, target, 2, 0) == Approx((0.0 + 0.5) / 2.0));
    CHECK(metric_r1(pred, target, 2, 1) == Approx((0.5 + 0.1) / 2.0));
    const auto curve = metric_r1_curve(pred, target, 2);
    REQUIRE(curve.size() == 2);
    CHECK(curve[1] == metric_r1(pred, target, 2, 1));
    CHECK(metric_r2(pred, target, 2) == Approx((0.25 + 0.3) / 2.0));
    CHECK(metric_r2(target, target, 2) == 0.0);
}

TEST_CASE("metric inputs are validated", "[metrics]") {
    const RowMatrix a = RowMatrix::Ones(4, 2);
    CHECK(kind_of([&] { (void)metric_r2(a, RowMatrix::Ones(3, 2), 1); }) == ErrorKind::Shape);
    CHECK(kind_of([&] { (void)metric_r2(a, a, 3); }) == ErrorKind::Shape);
    CHECK(kind_of([&] { (void)metric_r1(a, a, 2, 2); }) == ErrorKind::Shape);
    RowMatrix z = a;
    z.row(2).setZero();
    CHECK(kind_of([&] { (void)metric_r2(a, z, 2); }) == ErrorKind::Domain);
}

TEST_CASE("dataset predictions equal single-point predictions bit for bit", "[evaluate]") {
    const auto m = tiny_model(1);
    const auto& ds = corners();
    const RowMatrix pred = predict_dataset(m, ds);
    REQUIRE(pred.rows() == 8 * 50);
    for (Eigen::Index i : {0, 5, 7})
        for (Eigen::Index j : {0, 13, 49}) {
            const Vector x = m.predict(ds.x0.row(i).transpose(), ds.params.row(i).transpose(),
                                       ds.times[static_cast<std::size_t>(j)]);
            CHECK(pred.row(i * 50 + j) == x.transpose());
        }
}

TEST_CASE("evaluate agrees with the metric functions", "[evaluate]") {
    const auto m = tiny_model(2);
    const auto& ds = corners();
    const auto rep = evaluate(m, ds);
    const RowMatrix target = ds.stacked();
    const RowMatrix pred = predict_dataset(m, ds);
    CHECK(rep.r2 == metric_r2(pred, target, 50));
    CHECK(rep.r1 == metric_r1_curve(pred, target, 50));
    CHECK(rep.times == ds.times);
    CHECK(rep.n_samples == 8);

    const auto dir = fs::temp_directory_path() / "lilan_test_evaluation_report";
    fs::remove_all(dir);
    fs::create_directories(dir);
    rep.write_csv(dir);
    const auto curve = read_lines(dir / "r1_curve.csv");
    CHECK(curve.size() == 51);
    CHECK(curve[0] == "time,r1");
    const auto summary = read_lines(dir / "summary.csv");
    CHECK(summary[0] == "metric,value");
    CHECK(summary[1].rfind("r2,", 0) == 0);
    CHECK(std::stod(summary[1].substr(3)) == rep.r2);
}

TEST_CASE("speed benchmark reports both timings", "[speed]") {
    const auto m = tiny_model(3);
    const auto problem = robertson_problem(ParamSampling::Uniform);
    const auto rep = speed_benchmark(m, problem, 5, 11, problem.solver);
    CHECK(rep.n_ics == 5);
    CHECK(rep.solver_failures == 0);
    CHECK(rep.solver_seconds > 0.0);
    CHECK(rep.surrogate_seconds > 0.0);
    CHECK(rep.ratio == Approx(rep.solver_seconds / rep.surrogate_seconds));
    const auto f32 = speed_benchmark(m, problem, 3, 11, problem.solver, true);
    CHECK(f32.single_precision);

    const auto path = fs::temp_directory_path() / "lilan_test_evaluation_speed.csv";
    rep.write_csv(path);
    const auto lines = read_lines(path);
    REQUIRE(lines.size() == 2);
    CHECK(lines[0] == "n_ics,solver_seconds,surrogate_seconds,ratio,solver_failures,single_precision");
    CHECK(speed_benchmark(m, problem, 0, 1, problem.solver).ratio == 0.0);
}

// ---------------------------------------------------------------------------

TEST_CASE("study names", "[study]") {
    for (auto k : {StudyKind::SampleReduction, StudyKind::TimeCoarsening, StudyKind::TauAblation,
                   StudyKind::LatentExpansion})
        CHECK(study_from_string(to_string(k)) == k);
    CHECK(kind_of([] { (void)study_from_string("grid_search"); }) == ErrorKind::UnknownName);
}

TEST_CASE("studies produce one row per run with the documented seeds", "[study]") {
    StudyConfig cfg;
    cfg.architecture = tiny_arch();
    cfg.train.epochs = 3;
    cfg.train.batch_size = 4;
    cfg.seed = 21;
    const auto& ds = corners();

    SECTION("sample reduction") {
        cfg.settings = {8, 4};
        const auto rows = run_study(StudyKind::SampleReduction, cfg, ds, ds, ds);
        REQUIRE(rows.size() == 2);
        CHECK(rows[0].train_samples == 8);
        CHECK(rows[1].train_samples == 4);
        CHECK(rows[0].seed == derive_seed(21, 0));
        CHECK(rows[1].seed == derive_seed(21, 1));
        for (const auto& r : rows) {
            CHECK(r.status == "ok");
            CHECK(std::isfinite(r.r2));
        }
    }
    SECTION("time coarsening") {
        cfg.settings = {0, 8};
        const auto rows = run_study(StudyKind::TimeCoarsening, cfg, ds, ds, ds);
        REQUIRE(rows.size() == 2);
        CHECK(rows[0].train_times == 50);
        CHECK(rows[1].train_times == 7);
        CHECK(rows[0].seed == rows[1].seed);
        CHECK(rows[0].seed == derive_seed(21, 0));
    }
    SECTION("tau ablation") {
        cfg.settings = {1};
        const auto rows = run_study(StudyKind::TauAblation, cfg, ds, ds, ds);
        REQUIRE(rows.size() == 2);
        CHECK(rows[0].model == "lilan");
        CHECK(rows[1].model == "no_tau");
        CHECK(rows[0].train_times == 26);
        CHECK(rows[0].seed == rows[1].seed);
    }
    SECTION("latent expansion") {
        cfg.settings = {1, 3};
        const auto rows = run_study(StudyKind::LatentExpansion, cfg, ds, ds, ds);
        REQUIRE(rows.size() == 2);
        CHECK(rows[1].setting == 3);
        CHECK(rows[1].seed == derive_seed(21, 1));
    }
    SECTION("empty settings") {
        cfg.settings = {};
        CHECK(kind_of([&] { (void)run_study(StudyKind::TimeCoarsening, cfg, ds, ds, ds); }) == ErrorKind::Config);
    }
}

TEST_CASE("repeated studies give identical rows", "[study]") {
    StudyConfig cfg;
    cfg.architecture = tiny_arch();
    cfg.train.epochs = 2;
    cfg.seed = 5;
    cfg.settings = {4};
    const auto a = run_study(StudyKind::SampleReduction, cfg, corners(), corners(), corners());
    const auto b = run_study(StudyKind::SampleReduction, cfg, corners(), corners(), corners());
    CHECK(a[0].r2 == b[0].r2);
}

TEST_CASE("diverged study runs are recorded, not thrown", "[study]") {
    StudyConfig cfg;
    cfg.architecture = tiny_arch();
    cfg.train.epochs = 3;
    cfg.train.learning_rate = 1e300;
    cfg.settings = {0};
    const auto rows = run_study(StudyKind::TimeCoarsening, cfg, corners(), corners(), corners());
    REQUIRE(rows.size() == 1);
    CHECK(rows[0].status.rfind("diverged", 0) == 0);
    CHECK(std::isnan(rows[0].r2));

    const auto path = fs::temp_directory_path() / "lilan_test_evaluation_study.csv";
    write_study_csv(rows, path);
    const auto lines = read_lines(path);
    REQUIRE(lines.size() == 2);
    CHECK(lines[0] == "kind,setting,model,seed,train_samples,train_times,r2,status,train_seconds");
    CHECK(lines[1].rfind("time_coarsening,0,lilan,", 0) == 0);
}

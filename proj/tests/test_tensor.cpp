#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <filesystem>

#include "pyroprop/tensor.hpp"

using namespace pyroprop;

namespace {

Tensor<double> random_tensor(int n, int c, int h, int w, Rng& rng, double lo = -1.0,
                             double hi = 1.0) {
    Tensor<double> t(n, c, h, w);
    for (auto& e : t.v) e = rng.uniform(lo, hi);
    return t;
}

} // namespace

TEST_CASE("conv2d identity with 1x1 unit kernel") {
    Tape<float> tape;
    Rng rng(1);
    Tensor<float> x(1, 1, 4, 4);
    for (auto& e : x.v) e = static_cast<float>(rng.uniform(-1, 1));
    Tensor<float> w(1, 1, 1, 1);
    w.v[0] = 1.0f;
    Var<float> o = conv2d(tape.input(x), tape.input(w), tape.input(Tensor<float>(1, 1, 1, 1)),
                          1, 0);
    REQUIRE(o.val().same_shape(x));
    for (std::size_t i = 0; i < x.v.size(); ++i) CHECK(o.val().v[i] == x.v[i]);
}

TEST_CASE("conv2d all-ones 3x3 on constant input") {
    Tape<float> tape;
    Tensor<float> x(1, 1, 5, 5, 1.0f);
    Tensor<float> w(1, 1, 3, 3, 1.0f);
    Var<float> o = conv2d(tape.input(x), tape.input(w), tape.input(Tensor<float>(1, 1, 1, 1)),
                          1, 1);
    CHECK(o.val().at(0, 0, 2, 2) == 9.0f);
    CHECK(o.val().at(0, 0, 0, 0) == 4.0f);
    CHECK(o.val().at(0, 0, 0, 2) == 6.0f);
}

TEST_CASE("conv2d output size with stride 2") {
    Tape<float> tape;
    Tensor<float> x(1, 3, 64, 64);
    Rng rng(2);
    Tensor<float> w(8, 3, 3, 3);
    for (auto& e : w.v) e = static_cast<float>(rng.uniform(-1, 1));
    Var<float> o = conv2d(tape.input(x), tape.input(w), tape.input(Tensor<float>(1, 8, 1, 1)),
                          2, 1);
    CHECK(o.val().h == 32);
    CHECK(o.val().w == 32);
}

TEST_CASE("conv2d rejects mismatched shapes") {
    Tape<float> tape;
    Var<float> x = tape.input(Tensor<float>(1, 3, 8, 8));
    Var<float> w = tape.input(Tensor<float>(4, 2, 3, 3));
    Var<float> b = tape.input(Tensor<float>(1, 4, 1, 1));
    CHECK_THROWS_AS((void)conv2d(x, w, b, 1, 1), InvalidShape);
    Var<float> w2 = tape.input(Tensor<float>(4, 3, 3, 3));
    Var<float> b2 = tape.input(Tensor<float>(1, 5, 1, 1));
    CHECK_THROWS_AS((void)conv2d(x, w2, b2, 1, 1), InvalidShape);
}

TEST_CASE("depth_to_space2 inverts space_to_depth2 bit-exactly") {
    Tape<float> tape;
    Rng rng(3);
    Tensor<float> x(2, 3, 6, 8);
    for (auto& e : x.v) e = static_cast<float>(rng.uniform(-5, 5));
    Var<float> o = depth_to_space2(space_to_depth2(tape.input(x)));
    REQUIRE(o.val().same_shape(x));
    for (std::size_t i = 0; i < x.v.size(); ++i) CHECK(o.val().v[i] == x.v[i]);
}

TEST_CASE("maxpool2 on constants and a single block") {
    Tape<float> tape;
    Tensor<float> c(1, 1, 4, 4, 0.75f);
    Var<float> oc = maxpool2(tape.input(c));
    for (auto e : oc.val().v) CHECK(e == 0.75f);

    Tensor<float> x(1, 1, 2, 2);
    x.v = {1, 2, 3, 4};
    Var<float> o = maxpool2(tape.input(x));
    CHECK(o.val().v[0] == 4.0f);
    CHECK_THROWS_AS((void)maxpool2(tape.input(Tensor<float>(1, 1, 3, 3))), InvalidShape);
}

TEST_CASE("activations hit their reference values") {
    Tape<float> tape;
    Tensor<float> x(1, 1, 1, 3);
    x.v = {-1.0f, 2.0f, 0.0f};
    Var<float> l = leaky_relu(tape.input(x));
    CHECK(l.val().v[0] == doctest::Approx(-0.3f));
    CHECK(l.val().v[1] == 2.0f);

    Tensor<float> s(1, 1, 1, 2);
    s.v = {0.0f, -5.0f};
    Var<float> o = sigmoid(tape.input(s));
    CHECK(o.val().v[0] == 0.5f);
    CHECK(o.val().v[1] == doctest::Approx(0.0066928509f).epsilon(1e-4));
}

TEST_CASE("sobel_edges of a constant field is zero") {
    Tape<float> tape;
    Var<float> o = sobel_edges(tape.input(Tensor<float>(1, 2, 5, 5, 0.37f)));
    REQUIRE(o.val().c == 4);
    for (auto e : o.val().v) CHECK(e == 0.0f);
}

TEST_CASE("sobel_edges on a vertical step") {
    Tape<float> tape;
    Tensor<float> x(1, 1, 5, 6);
    for (int y = 0; y < 5; ++y)
        for (int c = 3; c < 6; ++c) x.at(0, 0, y, c) = 1.0f;
    Var<float> o = sobel_edges(tape.input(x));
    // columns adjacent to the step carry |Gx| = 4, the y-edge stays 0
    for (int y = 0; y < 5; ++y) {
        CHECK(std::abs(o.val().at(0, 0, y, 2)) == 4.0f);
        CHECK(std::abs(o.val().at(0, 0, y, 3)) == 4.0f);
        CHECK(o.val().at(0, 1, y, 2) == 0.0f);
        CHECK(o.val().at(0, 0, y, 0) == 0.0f);
    }
    CHECK_THROWS_AS((void)sobel_edges(tape.input(Tensor<float>(1, 1, 2, 2))), InvalidShape);
}

TEST_CASE("quarter-turn rotation swaps sobel channels up to sign") {
    Rng rng(11);
    const int n = 7;
    Tensor<float> x(1, 1, n, n);
    for (auto& e : x.v) e = static_cast<float>(rng.uniform(0, 1));
    // rotate by (r, c) -> (c, n-1-r)
    Tensor<float> xr(1, 1, n, n);
    for (int r = 0; r < n; ++r)
        for (int c = 0; c < n; ++c) xr.at(0, 0, c, n - 1 - r) = x.at(0, 0, r, c);

    Tape<float> tape;
    const Tensor<float> e = sobel_edges(tape.input(x)).val();
    const Tensor<float> er = sobel_edges(tape.input(xr)).val();
    // rotated-x edge equals -y edge of the original; rotated-y edge equals +x
    for (int r = 0; r < n; ++r)
        for (int c = 0; c < n; ++c) {
            CHECK(er.at(0, 0, c, n - 1 - r) ==
                  doctest::Approx(-e.at(0, 1, r, c)).epsilon(1e-5));
            CHECK(er.at(0, 1, c, n - 1 - r) ==
                  doctest::Approx(e.at(0, 0, r, c)).epsilon(1e-5));
        }
}

TEST_CASE("prob_update reference value and exactness guarantees") {
    Tape<float> tape;
    Tensor<float> P(1, 1, 1, 1);
    P.v = {0.2f};
    Tensor<float> F(1, 2, 1, 1);
    F.v = {0.5f, 0.5f};
    Var<float> o = prob_update(tape.input(P), tape.input(F));
    CHECK(o.val().v[0] == doctest::Approx(0.8f));

    Rng rng(4);
    Tensor<float> P2(1, 2, 6, 6);
    for (auto& e : P2.v) e = static_cast<float>(rng.uniform(0, 1));
    Var<float> vz = prob_update(tape.input(P2), tape.input(Tensor<float>(1, 8, 6, 6)));
    for (std::size_t i = 0; i < P2.v.size(); ++i) CHECK(vz.val().v[i] == P2.v[i]);

    Tensor<float> F1(1, 8, 6, 6);
    for (auto& e : F1.v) e = static_cast<float>(rng.uniform(0, 1));
    for (int y = 0; y < 6; ++y) F1.at(0, 3, y, y) = 1.0f; // one kernel of channel 0 fires
    Var<float> v1 = prob_update(tape.input(P2), tape.input(F1));
    for (int y = 0; y < 6; ++y) CHECK(v1.val().at(0, 0, y, y) == 1.0f);
}

TEST_CASE("prob_update constraints on random tensors") {
    Rng rng(5);
    for (int rep = 0; rep < 100; ++rep) {
        Tape<float> tape;
        Tensor<float> P(1, 2, 4, 4), F(1, 6, 4, 4);
        for (auto& e : P.v) e = static_cast<float>(rng.uniform(0, 1));
        for (auto& e : F.v) e = static_cast<float>(rng.uniform(0, 1));
        const Tensor<float> o = prob_update(tape.input(P), tape.input(F)).val();
        for (std::size_t i = 0; i < o.v.size(); ++i) {
            CHECK(o.v[i] >= P.v[i]);
            CHECK(o.v[i] <= 1.0f);
        }
    }
}

TEST_CASE("prob_update is monotone in each argument") {
    Rng rng(6);
    Tape<float> tape;
    Tensor<float> P(1, 1, 3, 3), F(1, 3, 3, 3);
    for (auto& e : P.v) e = static_cast<float>(rng.uniform(0.1, 0.8));
    for (auto& e : F.v) e = static_cast<float>(rng.uniform(0.1, 0.8));
    const Tensor<float> base = prob_update(tape.input(P), tape.input(F)).val();

    Tensor<float> Pup = P;
    Pup.at(0, 0, 1, 1) += 0.1f;
    const Tensor<float> op = prob_update(tape.input(Pup), tape.input(F)).val();
    CHECK(op.at(0, 0, 1, 1) > base.at(0, 0, 1, 1));

    Tensor<float> Fup = F;
    Fup.at(0, 2, 1, 1) += 0.1f;
    const Tensor<float> of = prob_update(tape.input(P), tape.input(Fup)).val();
    CHECK(of.at(0, 0, 1, 1) > base.at(0, 0, 1, 1));
}

TEST_CASE("prob_update validates input range") {
    Tape<float> tape;
    Tensor<float> P(1, 1, 2, 2, 0.5f);
    Tensor<float> bad(1, 2, 2, 2, 0.5f);
    bad.v[0] = 1.01f;
    CHECK_THROWS_AS((void)prob_update(tape.input(P), tape.input(bad)), InvalidInput);
    Tensor<float> drift(1, 2, 2, 2, 0.5f);
    drift.v[0] = 1.0f + 5e-7f; // within tolerance: silently clamped
    CHECK_NOTHROW((void)prob_update(tape.input(P), tape.input(drift)));
}

TEST_CASE("adam reference first step and zero-grad behaviour") {
    Parameter<float> p("w", Tensor<float>::scalar(1.0f));
    Adam<float> opt({&p});

    p.zero_grad();
    opt.step();
    CHECK(p.value.v[0] == 1.0f);
    CHECK(opt.step_count() == 1);

    Parameter<float> q("w", Tensor<float>::scalar(1.0f));
    Adam<float> opt2({&q});
    q.zero_grad();
    q.grad.v[0] = 1.0f;
    opt2.step();
    CHECK(q.value.v[0] == doctest::Approx(0.999f).epsilon(1e-6));
    CHECK(q.grad.v[0] == 0.0f); // gradients zeroed after the step
}

TEST_CASE("frozen parameters are bit-identical after 100 steps") {
    Rng rng(7);
    Parameter<float> frozen("enc", Tensor<float>(1, 4, 3, 3), false);
    for (auto& e : frozen.value.v) e = static_cast<float>(rng.uniform(-1, 1));
    Parameter<float> live("dec", Tensor<float>(1, 4, 3, 3), true);
    const std::vector<float> snapshot = frozen.value.v;

    Adam<float> opt({&frozen, &live});
    for (int i = 0; i < 100; ++i) {
        frozen.zero_grad();
        live.zero_grad();
        for (auto& e : frozen.grad.v) e = static_cast<float>(rng.uniform(-1, 1));
        for (auto& e : live.grad.v) e = static_cast<float>(rng.uniform(-1, 1));
        opt.step();
    }
    CHECK(frozen.value.v == snapshot);
    CHECK(live.value.v != snapshot);
}

TEST_CASE("gradient checks per op") {
    Rng rng(8);

    SUBCASE("conv2d 3x3") {
        auto x = random_tensor(1, 2, 6, 6, rng);
        auto w = random_tensor(3, 2, 3, 3, rng);
        auto b = random_tensor(1, 3, 1, 1, rng);
        auto tgt = random_tensor(1, 3, 6, 6, rng);
        const double err = grad_check(
            [&](Tape<double>&, std::vector<Var<double>>& in) {
                return mse_against(conv2d(in[0], in[1], in[2], 1, 1), tgt);
            },
            {x, w, b});
        CHECK(err <= 1e-3);
    }

    SUBCASE("conv2d stride 2") {
        auto x = random_tensor(1, 2, 6, 6, rng);
        auto w = random_tensor(2, 2, 3, 3, rng);
        auto b = random_tensor(1, 2, 1, 1, rng);
        auto tgt = random_tensor(1, 2, 3, 3, rng);
        const double err = grad_check(
            [&](Tape<double>&, std::vector<Var<double>>& in) {
                return mse_against(conv2d(in[0], in[1], in[2], 2, 1), tgt);
            },
            {x, w, b});
        CHECK(err <= 1e-3);
    }

    SUBCASE("pooling and reshapes") {
        auto x = random_tensor(1, 4, 6, 6, rng);
        auto tgt1 = random_tensor(1, 4, 3, 3, rng);
        CHECK(grad_check(
                  [&](Tape<double>&, std::vector<Var<double>>& in) {
                      return mse_against(maxpool2(in[0]), tgt1);
                  },
                  {x}) <= 1e-3);
        auto tgt2 = random_tensor(1, 16, 3, 3, rng);
        CHECK(grad_check(
                  [&](Tape<double>&, std::vector<Var<double>>& in) {
                      return mse_against(space_to_depth2(in[0]), tgt2);
                  },
                  {x}) <= 1e-3);
        auto tgt3 = random_tensor(1, 1, 12, 12, rng);
        CHECK(grad_check(
                  [&](Tape<double>&, std::vector<Var<double>>& in) {
                      return mse_against(depth_to_space2(in[0]), tgt3);
                  },
                  {x}) <= 1e-3);
        auto tgt4 = random_tensor(1, 4, 12, 12, rng);
        CHECK(grad_check(
                  [&](Tape<double>&, std::vector<Var<double>>& in) {
                      return mse_against(upsample_nearest2(in[0]), tgt4);
                  },
                  {x}) <= 1e-3);
    }

    SUBCASE("activations and sobel") {
        auto x = random_tensor(1, 2, 5, 5, rng);
        auto tgt = random_tensor(1, 2, 5, 5, rng);
        CHECK(grad_check(
                  [&](Tape<double>&, std::vector<Var<double>>& in) {
                      return mse_against(leaky_relu(in[0], 0.3), tgt);
                  },
                  {x}) <= 1e-3);
        CHECK(grad_check(
                  [&](Tape<double>&, std::vector<Var<double>>& in) {
                      return mse_against(sigmoid(in[0]), tgt);
                  },
                  {x}) <= 1e-3);
        auto tgt2 = random_tensor(1, 4, 5, 5, rng);
        CHECK(grad_check(
                  [&](Tape<double>&, std::vector<Var<double>>& in) {
                      return mse_against(sobel_edges(in[0]), tgt2);
                  },
                  {x}) <= 1e-3);
    }

    SUBCASE("prob_update K=3 plus loss plumbing") {
        auto P = random_tensor(1, 1, 5, 5, rng, 0.05, 0.95);
        auto F = random_tensor(1, 3, 5, 5, rng, 0.05, 0.95);
        auto tgt = random_tensor(1, 1, 3, 3, rng, 0.0, 1.0);
        const double err = grad_check(
            [&](Tape<double>&, std::vector<Var<double>>& in) {
                Var<double> o = prob_update(in[0], in[1]);
                Var<double> m = mse_against(crop_interior(o, 1), tgt);
                return log_ratio(m, 0.02, 1e-12);
            },
            {P, F});
        CHECK(err <= 1e-3);
    }
}

TEST_CASE("checkpoint round-trip is bit-exact and validates") {
    Rng rng(9);
    Parameter<float> a("conv1.w", Tensor<float>(4, 2, 3, 3));
    Parameter<float> b("conv1.b", Tensor<float>(1, 4, 1, 1), false);
    for (auto& e : a.value.v) e = static_cast<float>(rng.uniform(-2, 2));
    for (auto& e : b.value.v) e = static_cast<float>(rng.uniform(-2, 2));

    const std::string path = "tmp_ckpt_test.ppw";
    save_checkpoint(path, {&a, &b}, {{"note", "unit"}});

    Parameter<float> a2("conv1.w", Tensor<float>(4, 2, 3, 3));
    Parameter<float> b2("conv1.b", Tensor<float>(1, 4, 1, 1));
    const nlohmann::json hdr = load_checkpoint(path, {&a2, &b2});
    CHECK(a2.value.v == a.value.v);
    CHECK(b2.value.v == b.value.v);
    CHECK(b2.trainable == false);
    CHECK(hdr.at("config").at("note") == "unit");

    Parameter<float> wrong("conv1.w", Tensor<float>(4, 2, 5, 5));
    Parameter<float> b3("conv1.b", Tensor<float>(1, 4, 1, 1));
    CHECK_THROWS_AS((void)load_checkpoint(path, {&wrong, &b3}), FormatError);
    std::filesystem::remove(path);
}

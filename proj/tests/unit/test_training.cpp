#include <doctest.h>

#include <cmath>
#include <numeric>

#include "helpers.hpp"
#include "tcedit/error.hpp"
#include "tcedit/training.hpp"

using namespace tcedit;

namespace {

Scene synthetic_scene(std::uint64_t seed, std::size_t frames, std::size_t tracks = 6) {
    SyntheticSpec spec;
    spec.seed = seed;
    spec.duration_frames = frames;
    spec.tracks = tracks;
    auto show = generate_synthetic_show(spec);
    return {"s" + std::to_string(seed), std::move(show.pool), std::move(show.annotation)};
}

// A pool whose features encode (frame, track) so history rows can be traced back.
FeaturePool traced_pool(std::size_t frames, std::size_t tracks, std::size_t width) {
    FeaturePool pool(frames, tracks, width, 24.0);
    for (std::size_t i = 0; i < frames; ++i) {
        for (std::size_t j = 0; j < tracks; ++j) {
            auto v = pool.at(i, j);
            v[0] = static_cast<float>(i + 1);
            v[1] = static_cast<float>(j);
        }
    }
    return pool;
}

}  // namespace

TEST_SUITE("bce_loss") {
    TEST_CASE("closed forms") {
        CHECK(bce_loss(0.5, 1) == doctest::Approx(0.693147).epsilon(1e-6));
        CHECK(bce_loss(0.9, 1) == doctest::Approx(0.105361).epsilon(1e-5));
        CHECK(bce_loss(0.5, 0) == doctest::Approx(0.693147).epsilon(1e-6));
    }

    TEST_CASE("clamping keeps the loss finite") {
        CHECK(std::isfinite(bce_loss(0.0, 1)));
        CHECK(std::isfinite(bce_loss(1.0, 0)));
        CHECK(bce_loss(0.0, 1) == doctest::Approx(-std::log(1e-7)));
    }

    TEST_CASE("non-negative and monotone in p") {
        double prev1 = std::numeric_limits<double>::infinity();
        double prev0 = -1.0;
        for (int k = 1; k < 1000; ++k) {
            const double p = k / 1000.0;
            const double l1 = bce_loss(p, 1);
            const double l0 = bce_loss(p, 0);
            CHECK(l1 >= 0.0);
            CHECK(l0 >= 0.0);
            CHECK(l1 < prev1);
            CHECK(l0 > prev0);
            prev1 = l1;
            prev0 = l0;
        }
        CHECK(bce_loss(1.0 - 1e-12, 1) < 1e-6);
    }

    TEST_CASE("bce_with_logits is the mean of bce_loss over sigmoid") {
        Tensor<double> logits({4, 1}, {-2.0, 0.0, 1.5, 3.0});
        const std::vector<double> labels{0, 1, 1, 0};
        double ref = 0.0;
        for (std::size_t i = 0; i < 4; ++i) {
            ref += bce_loss(1.0 / (1.0 + std::exp(-logits.data()[i])), static_cast<int>(labels[i]));
        }
        CHECK(bce_with_logits(logits, std::span<const double>(labels)).item() == doctest::Approx(ref / 4.0));
    }
}

TEST_SUITE("generate_boundary_samples") {
    TEST_CASE("one boundary, J = 6: 6 groups, 36 instances") {
        FeaturePool pool = traced_pool(60, 6, 4);
        EditAnnotation ann{6, std::vector<TrackIndex>(60, 2)};
        const auto set = generate_boundary_samples(pool, ann, SamplingConfig{});
        CHECK(set.boundaries == 1);
        CHECK(set.group_count() == 6);
        CHECK(set.samples.size() == 36);
        CHECK(set.clipped_groups == 0);
    }

    TEST_CASE("a boundary at frame 0 is zero-padded") {
        FeaturePool pool = traced_pool(60, 6, 4);
        EditAnnotation ann{6, std::vector<TrackIndex>(60, 1)};
        const auto set = generate_boundary_samples(pool, ann, SamplingConfig{});
        const auto first = set.group(0);
        CHECK(first.front().meta.frame == 0);
        for (float v : first.front().history.data()) {
            CHECK(v == 0.0f);
        }
        // end frame 5: rows 0..10 are padding, rows 11..15 are frames 0..4 of track 1
        const auto& h = set.group(1).front().history;
        CHECK(set.group(1).front().meta.frame == 5);
        CHECK(h.at(10, 0) == 0.0f);
        for (std::size_t r = 11; r < 16; ++r) {
            CHECK(h.at(r, 0) == static_cast<float>(r - 11 + 1));
            CHECK(h.at(r, 1) == 1.0f);
        }
    }

    TEST_CASE("group end frames, labels and teacher-forced histories") {
        FeaturePool pool = traced_pool(100, 3, 4);
        EditAnnotation ann{3, std::vector<TrackIndex>(100, 0)};
        for (std::size_t i = 40; i < 100; ++i) {
            ann.selected[i] = 2;
        }
        SamplingConfig sampling{8, 5, 6};
        const auto set = generate_boundary_samples(pool, ann, sampling);
        REQUIRE(set.group_count() == 12);
        const std::vector<std::size_t> ends{0, 5, 10, 15, 20, 25, 40, 45, 50, 55, 60, 65};
        for (std::size_t g = 0; g < set.group_count(); ++g) {
            const auto group = set.group(g);
            REQUIRE(group.size() == 3);
            const std::size_t e = ends[g];
            int positives = 0;
            for (std::size_t j = 0; j < 3; ++j) {
                const auto& s = group[j];
                CHECK(s.meta.frame == e);
                CHECK(s.track_index == j);
                CHECK(s.label == (ann.selected[e] == j ? 1 : 0));
                positives += s.label;
                CHECK(s.history.node() == group[0].history.node());
                CHECK(s.context.node() == group[0].context.node());
                // context row j is the candidate v_{e,j}
                CHECK(s.context.at(j, 0) == static_cast<float>(e + 1));
                CHECK(s.context.at(j, 1) == static_cast<float>(j));
            }
            CHECK(positives == 1);
            const auto& h = group[0].history;
            for (std::size_t r = 0; r < 8; ++r) {
                if (e + r < 8) {
                    CHECK(h.at(r, 0) == 0.0f);
                    continue;
                }
                const std::size_t frame = e + r - 8;
                CHECK(h.at(r, 0) == static_cast<float>(frame + 1));
                CHECK(h.at(r, 1) == static_cast<float>(ann.selected[frame]));
            }
        }
    }

    TEST_CASE("groups past the scene end are clipped and counted") {
        FeaturePool pool = traced_pool(50, 2, 4);
        EditAnnotation ann{2, std::vector<TrackIndex>(50, 0)};
        for (std::size_t i = 38; i < 50; ++i) {
            ann.selected[i] = 1;
        }
        const auto set = generate_boundary_samples(pool, ann, SamplingConfig{});
        // boundary 38: ends 38, 43, 48 kept; 53, 58, 63 clipped
        CHECK(set.boundaries == 2);
        CHECK(set.clipped_groups == 3);
        CHECK(set.group_count() == 9);
    }

    TEST_CASE("count identity on synthetic scenes") {
        for (std::uint64_t seed = 0; seed < 5; ++seed) {
            const auto scene = synthetic_scene(seed, 600);
            const auto set = generate_boundary_samples(scene.pool, scene.annotation, SamplingConfig{});
            CHECK(set.boundaries == shots_from_annotation(scene.annotation).size());
            CHECK(set.group_count() == set.boundaries * 6 - set.clipped_groups);
            CHECK(set.samples.size() == set.group_count() * 6);
        }
    }

    TEST_CASE("errors") {
        FeaturePool pool = traced_pool(10, 2, 4);
        CHECK_THROWS((void)generate_boundary_samples(pool, EditAnnotation{2, {}}, SamplingConfig{}));
        EditAnnotation ann{2, std::vector<TrackIndex>(10, 0)};
        CHECK_THROWS((void)generate_boundary_samples(pool, ann, SamplingConfig{16, 0, 6}));
        EditAnnotation short_ann{2, std::vector<TrackIndex>(9, 0)};
        CHECK_THROWS((void)generate_boundary_samples(pool, short_ann, SamplingConfig{}));
    }
}

TEST_SUITE("adam_step") {
    TEST_CASE("first step from zero moves by the learning rate") {
        std::vector<NamedParam<float>> params{{"theta", Tensor<float>::scalar(0.0f, true)}};
        auto state = make_optimizer_state(params);
        const std::vector<std::vector<float>> grads{{1.0f}};
        TrainConfig config;
        adam_step(params, grads, state, config);
        CHECK(params[0].tensor.item() == doctest::Approx(-0.001).epsilon(1e-6));
        CHECK(state.step == 1);
    }

    TEST_CASE("a zero gradient leaves parameters unchanged but counts the step") {
        std::vector<NamedParam<float>> params{{"w", Tensor<float>({3}, {1, 2, 3}, true)}};
        auto state = make_optimizer_state(params);
        const std::vector<std::vector<float>> grads{{0, 0, 0}};
        adam_step(params, grads, state, TrainConfig{});
        CHECK(std::vector<float>(params[0].tensor.data().begin(), params[0].tensor.data().end()) ==
              std::vector<float>{1, 2, 3});
        CHECK(state.step == 1);
    }

    TEST_CASE("shape mismatch") {
        std::vector<NamedParam<float>> params{{"w", Tensor<float>({3}, {1, 2, 3}, true)}};
        auto state = make_optimizer_state(params);
        const std::vector<std::vector<float>> grads{{0, 0}};
        CHECK_THROWS_AS(adam_step(params, grads, state, TrainConfig{}), DimensionError);
    }

    TEST_CASE("config validation collects every problem") {
        TrainConfig c;
        c.learning_rate = 0.0;
        c.beta1 = 1.0;
        c.beta2 = -0.1;
        CHECK(c.problems().size() == 3);
        CHECK_THROWS_AS(c.validate(), ConfigError);
    }
}

TEST_SUITE("train") {
    TEST_CASE("overfits 32 instances within 500 steps") {
        const auto scene = synthetic_scene(3, 300, 4);
        auto all = generate_boundary_samples(scene.pool, scene.annotation, SamplingConfig{});
        REQUIRE(all.group_count() >= 8);
        SampleSet small;
        for (std::size_t g = 0; g < 8; ++g) {
            const auto group = all.group(g);
            small.samples.insert(small.samples.end(), group.begin(), group.end());
            small.group_offsets.push_back(small.samples.size());
        }
        REQUIRE(small.samples.size() == 32);
        ModelConfig mc;
        TrainConfig tc;
        tc.batch_size = 8;
        tc.epochs = 500;
        const auto result = train_on_samples(init_params(mc), small, tc);
        REQUIRE(result.step_losses.size() == 500);
        CHECK(result.curve.back().mean_loss < 0.05);

        std::vector<double> averages;
        for (std::size_t s = 0; s < 500; s += 10) {
            averages.push_back(std::accumulate(result.step_losses.begin() + static_cast<std::ptrdiff_t>(s),
                                               result.step_losses.begin() + static_cast<std::ptrdiff_t>(s + 10), 0.0) /
                               10.0);
        }
        for (std::size_t i = 1; i < averages.size(); ++i) {
            CAPTURE(i);
            CHECK(averages[i] < averages[i - 1]);
        }
    }

    TEST_CASE("first epoch starts near chance") {
        std::vector<Scene> scenes{synthetic_scene(10, 720), synthetic_scene(11, 720)};
        TrainConfig tc;
        tc.epochs = 1;
        const auto result = train(scenes, ModelConfig{}, tc);
        REQUIRE(result.curve.size() == 1);
        CHECK(result.curve[0].mean_loss < std::log(2.0) + 0.05);
        CHECK(result.curve[0].step == (result.groups + 31) / 32);
    }

    TEST_CASE("a fixed seed reproduces the loss curve bit for bit") {
        std::vector<Scene> scenes{synthetic_scene(12, 400)};
        ModelConfig mc;
        mc.d_model = 16;
        mc.d_ff = 32;
        mc.d_fuse = 16;
        TrainConfig tc;
        tc.epochs = 2;
        tc.seed = 9;
        const auto a = train(scenes, mc, tc);
        const auto b = train(scenes, mc, tc);
        CHECK(a.step_losses == b.step_losses);
        const auto pa = a.params.named();
        const auto pb = b.params.named();
        for (std::size_t i = 0; i < pa.size(); ++i) {
            CHECK(std::equal(pa[i].tensor.data().begin(), pa[i].tensor.data().end(), pb[i].tensor.data().begin()));
        }
        mc.seed = 10;
        const auto c = train(scenes, mc, tc);
        CHECK(c.step_losses != a.step_losses);
    }

    TEST_CASE("no samples or mismatched widths are errors") {
        CHECK_THROWS((void)train(std::span<const Scene>(), ModelConfig{}, TrainConfig{}));
        std::vector<Scene> scenes{synthetic_scene(1, 100)};
        ModelConfig mc;
        mc.d_in = 8;
        CHECK_THROWS_AS((void)train(scenes, mc, TrainConfig{}), DimensionError);
    }

    TEST_CASE("loss curve table") {
        const std::vector<EpochLoss> curve{{10, 1, 0.5}, {20, 2, 0.25}};
        CHECK(format_loss_curve(curve) == "step\tepoch\tmean_loss\n10\t1\t0.5\n20\t2\t0.25\n");
    }
}

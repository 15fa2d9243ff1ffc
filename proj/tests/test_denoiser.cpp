#include <doctest.h>

#include <functional>

#include "mgpf/rng.hpp"
#include "mgpf/unet.hpp"

using namespace mgpf;

namespace {

UNetConfig tiny_config() {
    UNetConfig cfg;
    cfg.image_size = 8;
    cfg.c0 = 4;
    cfg.c1 = 8;
    cfg.c2 = 8;
    cfg.d_attn = 6;
    cfg.d_tok = 5;
    cfg.temb_dim = 8;
    cfg.groups = 2;
    cfg.vocab_size = 6;
    return cfg;
}

template <typename S>
FeatureMap<S> random_latent(Rng& rng, const UNetConfig& cfg) {
    FeatureMap<S> z(cfg.in_ch, cfg.image_size, cfg.image_size);
    rng.fill_normal(z.data);
    return z;
}

void fd_check_subset(Mat<double>& m, const Mat<double>& grad, const std::function<double()>& f,
                     int stride, double tol = 1e-4, double eps = 1e-5) {
    REQUIRE(grad.rows() == m.rows());
    REQUIRE(grad.cols() == m.cols());
    int idx = 0;
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
        for (Eigen::Index i = 0; i < m.rows(); ++i, ++idx) {
            if (idx % stride) continue;
            double orig = m(i, j);
            m(i, j) = orig + eps;
            double lp = f();
            m(i, j) = orig - eps;
            double lm = f();
            m(i, j) = orig;
            double fd = (lp - lm) / (2 * eps);
            double scale = std::max({1.0, std::abs(fd), std::abs(grad(i, j))});
            CHECK(std::abs(fd - grad(i, j)) / scale < tol);
        }
    }
}

}  // namespace

TEST_CASE("text embedder: null prompt, locality, determinism, bounds") {
    Rng rng(1);
    TextEmbedder<double> emb(5, 6);
    emb.init(rng);
    Mat<double> nul = emb.embed({});
    CHECK(nul.cols() == 1);
    CHECK((nul - emb.table.value.col(6)).cwiseAbs().maxCoeff() == 0.0);

    Mat<double> e = emb.embed({2, 4, 2});
    CHECK(e.cols() == 3);
    CHECK((e.col(0) - e.col(2)).cwiseAbs().maxCoeff() == 0.0);
    CHECK((e - emb.embed({2, 4, 2})).cwiseAbs().maxCoeff() == 0.0);

    CHECK_THROWS_AS(emb.embed({-1}), UnknownTokenError);
    CHECK_THROWS_AS(emb.embed({7}), UnknownTokenError);
}

TEST_CASE("single token receives full attention everywhere") {
    Rng rng(2);
    UNetConfig cfg = tiny_config();
    UNet<double> unet(cfg);
    unet.init(rng);
    TextEmbedder<double> emb(cfg.d_tok, cfg.vocab_size);
    emb.init(rng);
    auto z = random_latent<double>(rng, cfg);
    AttentionRecord<double> rec;
    unet.forward(z, emb.embed({3}), 5, &rec);
    REQUIRE(rec.layers.size() == UNet<double>::kNumAttnLayers);
    for (const auto& l : rec.layers) {
        CHECK(l.maps.rows() == 1);
        CHECK((l.maps.array() - 1.0).abs().maxCoeff() < 1e-12);
    }
}

TEST_CASE("identical token embeddings split attention evenly") {
    Rng rng(3);
    UNetConfig cfg = tiny_config();
    UNet<double> unet(cfg);
    unet.init(rng);
    TextEmbedder<double> emb(cfg.d_tok, cfg.vocab_size);
    emb.init(rng);
    emb.table.value.col(1) = emb.table.value.col(0);
    auto z = random_latent<double>(rng, cfg);
    AttentionRecord<double> rec;
    unet.forward(z, emb.embed({0, 1}), 9, &rec);
    for (const auto& l : rec.layers) {
        REQUIRE(l.maps.rows() == 2);
        CHECK((l.maps.array() - 0.5).abs().maxCoeff() < 1e-12);
    }
}

TEST_CASE("attention map columns sum to one") {
    Rng rng(4);
    UNetConfig cfg = tiny_config();
    UNet<double> unet(cfg);
    unet.init(rng);
    TextEmbedder<double> emb(cfg.d_tok, cfg.vocab_size);
    emb.init(rng);
    auto z = random_latent<double>(rng, cfg);
    AttentionRecord<double> rec;
    unet.forward(z, emb.embed({0, 2, 5}), 3, &rec);
    for (const auto& l : rec.layers) {
        CHECK(l.h * l.w == l.maps.cols());
        for (Eigen::Index p = 0; p < l.maps.cols(); ++p)
            CHECK(l.maps.col(p).sum() == doctest::Approx(1.0).epsilon(1e-6));
    }
}

TEST_CASE("recording does not perturb the output") {
    Rng rng(5);
    UNetConfig cfg = tiny_config();
    UNet<double> unet(cfg);
    unet.init(rng);
    TextEmbedder<double> emb(cfg.d_tok, cfg.vocab_size);
    emb.init(rng);
    auto z = random_latent<double>(rng, cfg);
    AttentionRecord<double> rec;
    auto with = unet.forward(z, emb.embed({1, 4}), 7, &rec);
    auto without = unet.forward(z, emb.embed({1, 4}), 7, nullptr);
    CHECK((with.data - without.data).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("zero-initialized output head predicts zero epsilon") {
    Rng rng(6);
    UNetConfig cfg = tiny_config();
    UNet<double> unet(cfg);
    unet.init(rng);
    TextEmbedder<double> emb(cfg.d_tok, cfg.vocab_size);
    emb.init(rng);
    auto z = random_latent<double>(rng, cfg);
    auto eps = unet.forward(z, emb.embed({0}), 4);
    CHECK(eps.data.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("full network input gradient matches finite differences") {
    Rng rng(7);
    UNetConfig cfg = tiny_config();
    UNet<double> unet(cfg);
    unet.init(rng);
    // non-zero output head so the loss actually depends on everything
    ParamList<double> params;
    unet.collect(params, "u");
    for (auto& [n, p] : params)
        if (n.find("out_conv") != std::string::npos) rng.fill_normal(p->value, 0.3);
    TextEmbedder<double> emb(cfg.d_tok, cfg.vocab_size);
    emb.init(rng);
    auto z = random_latent<double>(rng, cfg);
    Mat<double> e = emb.embed({1, 3});
    Mat<double> c(cfg.out_ch, cfg.image_size * cfg.image_size);
    rng.fill_normal(c);
    Mat<double> ca(2, 4);  // seed on the mid-layer maps
    rng.fill_normal(ca);

    auto loss = [&]() {
        UNet<double> tmp = unet;
        AttentionRecord<double> rec;
        auto eps = tmp.forward(z, e, 6, &rec);
        return (eps.data.array() * c.array()).sum() + (rec.layers[3].maps.array() * ca.array()).sum();
    };
    AttentionRecord<double> rec;
    auto eps = unet.forward(z, e, 6, &rec);
    FeatureMap<double> deps = eps;
    deps.data = c;
    std::vector<Mat<double>> seeds(UNet<double>::kNumAttnLayers);
    seeds[3] = ca;
    auto g = unet.backward(deps, &seeds);
    fd_check_subset(z.data, g.dz.data, loss, 7);
    fd_check_subset(e, g.demb, loss, 3);
}

TEST_CASE("control residual gradients match finite differences") {
    Rng rng(8);
    UNetConfig cfg = tiny_config();
    UNet<double> unet(cfg);
    unet.init(rng);
    ParamList<double> params;
    unet.collect(params, "u");
    for (auto& [n, p] : params)
        if (n.find("out_conv") != std::string::npos) rng.fill_normal(p->value, 0.3);
    TextEmbedder<double> emb(cfg.d_tok, cfg.vocab_size);
    emb.init(rng);
    auto z = random_latent<double>(rng, cfg);
    Mat<double> e = emb.embed({2});

    ControlResiduals<double> res;
    auto rres = unet.injection_resolutions();
    auto cres = unet.injection_channels();
    for (int i = 0; i < UNet<double>::kNumInjections; ++i) {
        FeatureMap<double> b(cres[i], rres[i].first, rres[i].second);
        rng.fill_normal(b.data, 0.1);
        res.blocks.push_back(b);
    }
    Mat<double> c(cfg.out_ch, cfg.image_size * cfg.image_size);
    rng.fill_normal(c);

    auto loss = [&]() {
        UNet<double> tmp = unet;
        return (tmp.forward(z, e, 2, nullptr, &res).data.array() * c.array()).sum();
    };
    auto eps = unet.forward(z, e, 2, nullptr, &res);
    FeatureMap<double> deps = eps;
    deps.data = c;
    auto g = unet.backward(deps);
    REQUIRE(g.dresiduals.size() == UNet<double>::kNumInjections);
    for (int i = 0; i < UNet<double>::kNumInjections; ++i)
        fd_check_subset(res.blocks[i].data, g.dresiduals[i].data, loss, 5);
}

TEST_CASE("forward is deterministic") {
    Rng rng(9);
    UNetConfig cfg = tiny_config();
    UNet<float> unet(cfg);
    unet.init(rng);
    TextEmbedder<float> emb(cfg.d_tok, cfg.vocab_size);
    emb.init(rng);
    auto z = random_latent<float>(rng, cfg);
    auto a = unet.forward(z, emb.embed({1, 2}), 5);
    auto b = unet.forward(z, emb.embed({1, 2}), 5);
    CHECK((a.data - b.data).cwiseAbs().maxCoeff() == 0.0f);
}

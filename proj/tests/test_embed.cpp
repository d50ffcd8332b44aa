#include <doctest.h>

#include <cmath>

#include "crdm/embed.hpp"
#include "crdm/rng.hpp"

using namespace crdm;
using namespace crdm::embed;

namespace {

// Two families of documents drawing paths from disjoint node ranges.
PathCorpus two_cluster_corpus(std::size_t per_class, std::uint64_t seed)
{
    Rng rng(seed);
    PathCorpus corpus;
    for (int label = 0; label < 2; ++label) {
        for (std::size_t d = 0; d < per_class; ++d) {
            Document doc{"g" + std::to_string(label) + "_" + std::to_string(d), label, {}};
            for (int p = 0; p < 12; ++p) {
                sim::Path path;
                for (int t = 0; t < 5; ++t) path.push_back(static_cast<sim::NodeId>(label * 20 + rng.below(20)));
                doc.paths.push_back(path);
            }
            corpus.documents.push_back(doc);
        }
    }
    return corpus;
}

double cosine(std::span<const float> a, std::span<const float> b)
{
    double ab = 0, aa = 0, bb = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        ab += double(a[i]) * b[i];
        aa += double(a[i]) * a[i];
        bb += double(b[i]) * b[i];
    }
    return ab / std::sqrt(aa * bb);
}

// Cyclic Jacobi on a symmetric matrix; eigenvalues in descending order.
std::pair<Eigen::VectorXd, Eigen::MatrixXd> jacobi_eigen(Eigen::MatrixXd a)
{
    const auto n = a.rows();
    Eigen::MatrixXd v = Eigen::MatrixXd::Identity(n, n);
    for (int sweep = 0; sweep < 100; ++sweep) {
        double off = 0;
        for (Eigen::Index p = 0; p < n; ++p)
            for (Eigen::Index q = p + 1; q < n; ++q) off += a(p, q) * a(p, q);
        if (off < 1e-26) break;
        for (Eigen::Index p = 0; p < n; ++p) {
            for (Eigen::Index q = p + 1; q < n; ++q) {
                if (std::abs(a(p, q)) < 1e-300) continue;
                const double theta = (a(q, q) - a(p, p)) / (2 * a(p, q));
                const double t = (theta >= 0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1));
                const double c = 1 / std::sqrt(t * t + 1), s = t * c;
                for (Eigen::Index k = 0; k < n; ++k) {
                    const double akp = a(k, p), akq = a(k, q);
                    a(k, p) = c * akp - s * akq;
                    a(k, q) = s * akp + c * akq;
                }
                for (Eigen::Index k = 0; k < n; ++k) {
                    const double apk = a(p, k), aqk = a(q, k);
                    a(p, k) = c * apk - s * aqk;
                    a(q, k) = s * apk + c * aqk;
                }
                for (Eigen::Index k = 0; k < n; ++k) {
                    const double vkp = v(k, p), vkq = v(k, q);
                    v(k, p) = c * vkp - s * vkq;
                    v(k, q) = s * vkp + c * vkq;
                }
            }
        }
    }
    std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
    for (Eigen::Index i = 0; i < n; ++i) order[static_cast<std::size_t>(i)] = i;
    std::sort(order.begin(), order.end(), [&](auto x, auto y) { return a(x, x) > a(y, y); });
    Eigen::VectorXd values(n);
    Eigen::MatrixXd vectors(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
        values(i) = a(order[static_cast<std::size_t>(i)], order[static_cast<std::size_t>(i)]);
        vectors.col(i) = v.col(order[static_cast<std::size_t>(i)]);
    }
    return {values, vectors};
}

EmbeddingSpace random_space(std::size_t rows, std::size_t dim, std::uint64_t seed)
{
    Rng rng(seed);
    EmbeddingSpace space(dim, Metric::Euclidean, ItemKind::Graph);
    std::vector<double> v(dim);
    for (std::size_t r = 0; r < rows; ++r) {
        // anisotropic so the spectrum has distinct values
        for (std::size_t j = 0; j < dim; ++j) v[j] = rng.uniform(-1, 1) * (1.0 + 0.7 * static_cast<double>(dim - j));
        space.push_back(std::span<const double>(v), static_cast<int>(r % 10));
    }
    return space;
}

}  // namespace

TEST_CASE("corpus helpers and validation")
{
    PathCorpus corpus;
    corpus.documents.push_back({"a", 0, {{3, 1, 2}, {1, 7}}});
    corpus.documents.push_back({"b", 1, {{5, 3}}});
    CHECK(corpus.path_count() == 3);
    CHECK(corpus.token_count() == 7);
    CHECK(corpus.node_vocabulary() == std::vector<sim::NodeId>{1, 2, 3, 5, 7});
    CHECK_NOTHROW(corpus.validate());

    auto dup = corpus;
    dup.documents[1].graph_id = "a";
    CHECK_THROWS_AS(dup.validate(), std::invalid_argument);

    auto short_path = corpus;
    short_path.documents[0].paths.push_back({4});
    CHECK_THROWS_AS(short_path.validate(), std::invalid_argument);
}

TEST_CASE("training rejects degenerate input")
{
    CHECK_THROWS(train_graph_embeddings(PathCorpus{}, {}));
    EmbedParams zero;
    zero.dim = 0;
    CHECK_THROWS(train_graph_embeddings(two_cluster_corpus(2, 1), zero));
}

TEST_CASE("embeddings are deterministic for a fixed seed")
{
    const auto corpus = two_cluster_corpus(10, 3);
    EmbedParams p;
    p.dim = 16;
    const auto a = train_graph_embeddings(corpus, p);
    const auto b = train_graph_embeddings(corpus, p);
    CHECK(a.space.values == b.space.values);
    CHECK(a.epoch_loss == b.epoch_loss);
    p.seed = 2;
    CHECK(train_graph_embeddings(corpus, p).space.values != a.space.values);
}

TEST_CASE("document order does not matter")
{
    const auto corpus = two_cluster_corpus(8, 4);
    auto reversed = corpus;
    std::reverse(reversed.documents.begin(), reversed.documents.end());
    EmbedParams p;
    p.dim = 12;
    const auto a = train_graph_embeddings(corpus, p);
    const auto b = train_graph_embeddings(reversed, p);
    const auto n = corpus.documents.size();
    for (std::size_t i = 0; i < n; ++i) {
        const auto ra = a.space.row(i);
        const auto rb = b.space.row(n - 1 - i);
        CHECK(std::equal(ra.begin(), ra.end(), rb.begin()));
        CHECK(a.space.labels[i] == b.space.labels[n - 1 - i]);
    }
}

TEST_CASE("output shape and labels")
{
    const auto corpus = two_cluster_corpus(5, 5);
    EmbedParams p;
    p.dim = 8;
    p.epochs = 3;
    const auto e = train_graph_embeddings(corpus, p);
    CHECK(e.space.rows() == 10);
    CHECK(e.space.dim == 8);
    CHECK(e.space.metric == Metric::Cosine);
    CHECK(e.epoch_loss.size() == 3);
    CHECK(e.space.labels[0] == 0);
    CHECK(e.space.labels[9] == 1);
    CHECK_NOTHROW(e.space.validate());
}

TEST_CASE("a single graph still trains")
{
    PathCorpus corpus;
    corpus.documents.push_back({"only", 3, {{0, 1, 2}, {2, 1}}});
    EmbedParams p;
    p.dim = 4;
    const auto e = train_graph_embeddings(corpus, p);
    CHECK(e.space.rows() == 1);
    CHECK_NOTHROW(e.space.validate());
}

TEST_CASE("loss falls and same-cluster graphs end up closer")
{
    const auto corpus = two_cluster_corpus(15, 6);
    EmbedParams p;
    p.dim = 16;
    p.epochs = 30;
    const auto e = train_graph_embeddings(corpus, p);
    CHECK(e.epoch_loss.back() < e.epoch_loss.front());

    double within = 0, across = 0;
    std::size_t nw = 0, na = 0;
    for (std::size_t i = 0; i < e.space.rows(); ++i) {
        for (std::size_t j = i + 1; j < e.space.rows(); ++j) {
            const double c = cosine(e.space.row(i), e.space.row(j));
            if (e.space.labels[i] == e.space.labels[j]) within += c, ++nw;
            else across += c, ++na;
        }
    }
    CHECK(within / double(nw) > across / double(na) + 0.2);
}

TEST_CASE("PCA of points on a plane explains all variance in two components")
{
    Rng rng(8);
    EmbeddingSpace space(5, Metric::Euclidean, ItemKind::Graph);
    const Eigen::VectorXd u = Eigen::VectorXd::Unit(5, 0) + Eigen::VectorXd::Unit(5, 3);
    const Eigen::VectorXd w = Eigen::VectorXd::Unit(5, 1) - 0.5 * Eigen::VectorXd::Unit(5, 4);
    for (int i = 0; i < 60; ++i) {
        const Eigen::VectorXd x = rng.uniform(-3, 3) * u + rng.uniform(-1, 1) * w + Eigen::VectorXd::Constant(5, 2.0);
        space.push_back(std::span<const double>(x.data(), 5), i % 2);
    }
    const auto proj = pca(space, 2);
    CHECK(proj.explained_variance_ratio().sum() == doctest::Approx(1.0).epsilon(1e-5));
    CHECK(reconstruction_error(space, proj) == doctest::Approx(0.0).epsilon(1e-3).scale(1.0));
}

TEST_CASE("PCA matches a Jacobi eigendecomposition of the covariance")
{
    const auto space = random_space(200, 6, 9);
    const auto proj = pca(space, 6);

    Eigen::MatrixXd x(static_cast<Eigen::Index>(space.rows()), 6);
    for (std::size_t r = 0; r < space.rows(); ++r)
        for (std::size_t j = 0; j < 6; ++j) x(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(j)) = space.row(r)[j];
    const Eigen::RowVectorXd mean = x.colwise().mean();
    const Eigen::MatrixXd centred = x.rowwise() - mean;
    const Eigen::MatrixXd cov = centred.transpose() * centred / double(space.rows() - 1);
    const auto [values, vectors] = jacobi_eigen(cov);

    for (Eigen::Index i = 0; i < 6; ++i) {
        CHECK(proj.explained_variance(i) == doctest::Approx(values(i)).epsilon(1e-6));
        const double align = std::abs(proj.components.row(i).dot(vectors.col(i)));
        CHECK(align == doctest::Approx(1.0).epsilon(1e-6));
    }
    CHECK(proj.total_variance == doctest::Approx(cov.trace()).epsilon(1e-9));
    CHECK((proj.mean - mean.transpose()).norm() < 1e-9);
}

TEST_CASE("PCA components are orthonormal and sign normalised")
{
    const auto space = random_space(100, 10, 10);
    const auto proj = pca(space, 4);
    const Eigen::MatrixXd gram = proj.components * proj.components.transpose();
    CHECK((gram - Eigen::MatrixXd::Identity(4, 4)).norm() < 1e-10);
    for (Eigen::Index i = 0; i < 4; ++i) {
        Eigen::Index arg;
        proj.components.row(i).cwiseAbs().maxCoeff(&arg);
        CHECK(proj.components(i, arg) > 0);
    }
    CHECK(proj.projected.rows() == 100);
    CHECK(proj.projected.cols() == 4);
    CHECK(proj.labels == space.labels);
    for (Eigen::Index i = 1; i < 4; ++i) CHECK(proj.explained_variance(i) <= proj.explained_variance(i - 1));
}

TEST_CASE("reconstruction error does not increase with k")
{
    const auto space = random_space(80, 8, 11);
    double prev = INFINITY;
    for (std::size_t k = 1; k <= 8; ++k) {
        const double err = reconstruction_error(space, pca(space, k));
        CHECK(err <= prev + 1e-9);
        prev = err;
    }
    CHECK(prev == doctest::Approx(0.0).scale(1.0).epsilon(1e-6));
}

TEST_CASE("PCA rejects k out of range")
{
    const auto space = random_space(5, 8, 12);
    CHECK_THROWS_AS(pca(space, 0), std::invalid_argument);
    CHECK_THROWS_AS(pca(space, 6), std::invalid_argument);
    CHECK_NOTHROW(pca(space, 5));
}

#include <doctest.h>

#include <random>

#include "oracles.hpp"
#include "shiftadd/tensor.hpp"

using namespace shiftadd;

TEST_CASE("tensor shape/data invariants") {
    Tensor t({2, 3});
    CHECK(t.size() == 6);
    CHECK_THROWS_AS(Tensor({2, 3}, {1.0, 2.0}), GeometryError);
    CHECK_THROWS_AS(Tensor({0, 3}), GeometryError);
    t.at({1, 2}) = 5.0;
    CHECK(t.at({1, 2}) == 5.0);
    CHECK_THROWS_AS(t.at({2, 0}), GeometryError);
    CHECK_THROWS_AS(t.at({0}), GeometryError);
}

TEST_CASE("row-major flatten round-trips for random shapes up to rank 4") {
    std::mt19937_64 rng(11);
    std::uniform_int_distribution<std::size_t> dim(1, 5);
    for (int iter = 0; iter < 30; ++iter) {
        const std::size_t rank = 1 + iter % 4;
        std::vector<std::size_t> shape;
        for (std::size_t i = 0; i < rank; ++i) shape.push_back(dim(rng));
        Tensor t = oracle::random_tensor(shape, rng);
        Tensor flat = t.reshaped({t.size()});
        CHECK(flat.reshaped(shape) == t);
    }
}

TEST_CASE("geometry output dims") {
    auto g = ConvGeometry::make(3, 4, 3, 3, 2, 1, 1, 8, 8);
    CHECK(g.out_rows == 4);
    CHECK(g.out_cols == 4);
    CHECK_THROWS_AS(ConvGeometry::make(1, 1, 5, 5, 1, 0, 0, 3, 3), GeometryError);
    CHECK_THROWS_AS(ConvGeometry::make(0, 1, 1, 1, 1, 0, 0, 3, 3), GeometryError);
}

TEST_CASE("extract_patch whole-input and strided cases") {
    auto g = ConvGeometry::make(1, 1, 2, 2, 1, 0, 0, 2, 2);
    Tensor x({1, 2, 2}, {1, 2, 3, 4});
    Tensor p = extract_patch(x, g, 0, 0);
    CHECK(p.vec() == std::vector<double>{1, 2, 3, 4});

    auto g2 = ConvGeometry::make(1, 1, 1, 1, 2, 0, 0, 3, 3);
    Tensor x2({1, 3, 3}, {1, 0, 0, 0, 1, 0, 0, 0, 1});
    CHECK(extract_patch(x2, g2, 1, 1)[0] == x2.at({0, 2, 2}));

    CHECK_THROWS_AS(extract_patch(x2, g, 0, 0), GeometryError);  // shape mismatch
    CHECK_THROWS_AS(extract_patch(x2, g2, 2, 0), GeometryError);
}

TEST_CASE("extract_patch matches nested-loop oracle with padding") {
    std::mt19937_64 rng(7);
    auto g = ConvGeometry::make(3, 1, 3, 3, 1, 1, 1, 5, 5);
    Tensor x = oracle::random_tensor({3, 5, 5}, rng);
    const Tensor xp = oracle::materialize_padded(x, g);
    std::size_t touched = 0;
    for (std::size_t e = 0; e < g.out_rows; ++e)
        for (std::size_t f = 0; f < g.out_cols; ++f) {
            Tensor p = extract_patch(x, g, e, f);
            for (std::size_t c = 0; c < 3; ++c)
                for (std::size_t r = 0; r < 3; ++r)
                    for (std::size_t s = 0; s < 3; ++s) {
                        CHECK(p.at({c, r, s}) == xp.at({c, e + r, f + s}));
                        ++touched;
                    }
        }
    CHECK(touched == 3 * 3 * 3 * g.out_rows * g.out_cols);
}

TEST_CASE("elementwise ops") {
    Tensor a({2}, {1, 2}), b({2}, {3, 4});
    CHECK(tensor_elementwise(ElementwiseOp::Add, a, b).vec() == std::vector<double>{4, 6});
    CHECK(tensor_elementwise(ElementwiseOp::Sub, a, a).vec() == std::vector<double>{0, 0});
    Tensor c({3}, {-3, 0.5, 2});
    CHECK(tensor_clamp(c, -1, 1).vec() == std::vector<double>{-1, 0.5, 1});
    CHECK_THROWS_AS(tensor_elementwise(ElementwiseOp::Add, a, Tensor({3})), GeometryError);
}

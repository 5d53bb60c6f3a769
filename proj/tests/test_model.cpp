#include <cmath>
#include <fstream>
#include <random>
#include <sstream>
#include <string>

#include <gtest/gtest.h>

#include "monofb/model.hpp"

using namespace monofb;

namespace {

std::string read_file(const std::string& path) {
  std::ifstream in(path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

const char* kGoodwin = R"(model goodwin3
states x1 x2 x3
inputs u1
param V 2.0
param m 4.0
order_states + + +
order_inputs +
dx1 = -x1 + u1
dx2 = -x2 + x1
dx3 = -x3 + x2
y1 = V/(1 + x3^m)
)";

Error error_of(const std::string& doc) {
  try {
    load_model(doc);
  } catch (const Error& e) {
    return e;
  }
  ADD_FAILURE() << "model loaded:\n" << doc;
  return Error(ErrorCode::Validation, "none");
}

}  // namespace

TEST(LoadModel, ScalarExample) {
  const ModelDef m = load_model("model scalar\nstates x1\ninputs u1\ndx1 = -x1 + u1\ny1 = -0.5*x1\n");
  EXPECT_EQ(m.n(), 1u);
  EXPECT_EQ(m.m(), 1u);
  EXPECT_FALSE(m.is_linear());
  EXPECT_DOUBLE_EQ(m.rhs(Vec{2.0}, Vec{3.0})[0], 1.0);
  EXPECT_DOUBLE_EQ(m.output(Vec{2.0})[0], -1.0);
  EXPECT_EQ(m.order_states().to_string(), "+");
}

TEST(LoadModel, GoodwinRoundTrip) {
  const ModelDef m = load_model(kGoodwin);
  EXPECT_EQ(m.n(), 3u);
  EXPECT_EQ(m.m(), 1u);
  EXPECT_EQ(m.param("V"), 2.0);
  const std::string text = to_text(m);
  const ModelDef again = load_model(text);
  EXPECT_EQ(to_text(again), text);
  for (std::size_t i = 0; i < 3; ++i) EXPECT_TRUE(same_structure(m.rhs_exprs()[i], again.rhs_exprs()[i]));
  EXPECT_TRUE(same_structure(m.output_exprs()[0], again.output_exprs()[0]));
  // h(0) = V
  EXPECT_DOUBLE_EQ(m.output(Vec{0, 0, 0})[0], 2.0);
  EXPECT_DOUBLE_EQ(m.output(Vec{0, 0, 1})[0], 1.0);
}

TEST(LoadModel, ShippedModelsLoad) {
  for (const char* f : {"goodwin3", "goodwin_p2", "scalar", "scalar_k2", "scalar_linear", "positive2"}) {
    const ModelDef m = load_model(read_file(std::string(MONOFB_MODELS_DIR) + "/" + f + ".model"));
    EXPECT_GE(m.n(), 1u) << f;
    const ModelDef again = load_model(to_text(m));
    EXPECT_EQ(to_text(again), to_text(m)) << f;
  }
}

TEST(LoadModel, LinearBlocks) {
  const ModelDef m = load_model("model lin\nlinear A = [[-1]]\nlinear B = [[1]]\nlinear C = [[0.5]]\n");
  ASSERT_TRUE(m.is_linear());
  EXPECT_EQ(m.states(), std::vector<std::string>{"x1"});
  EXPECT_DOUBLE_EQ(m.output(Vec{2.0})[0], -1.0);
  EXPECT_DOUBLE_EQ(m.rhs(Vec{2.0}, Vec{3.0})[0], 1.0);
}

TEST(LoadModel, LinearDimensionMismatch) {
  const Error e = error_of(
      "model bad\nlinear A = [[-1, 0], [0, -1]]\nlinear B = [[1], [1]]\nlinear C = [[1, 0], [0, 1]]\n");
  EXPECT_EQ(e.code(), ErrorCode::DimensionMismatch);
  EXPECT_EQ(e.category(), ErrorCategory::Validation);
  EXPECT_TRUE(e.line().has_value());
}

TEST(LoadModel, ErrorsCarryLines) {
  Error e = error_of("model bad\nstates x1\ninputs u1\ndx1 = -x1 + * u1\ny1 = x1\n");
  EXPECT_EQ(e.category(), ErrorCategory::Parse);
  EXPECT_EQ(e.line(), 4u);

  e = error_of("model bad\nstates x1\ninputs u1\ndx1 = -x1 + w\ny1 = x1\n");
  EXPECT_EQ(e.code(), ErrorCode::UnboundVariable);
  EXPECT_EQ(e.category(), ErrorCategory::Validation);
  EXPECT_EQ(e.line(), 4u);

  // outputs may not read inputs
  e = error_of("model bad\nstates x1\ninputs u1\ndx1 = -x1 + u1\ny1 = u1\n");
  EXPECT_EQ(e.code(), ErrorCode::UnboundVariable);
  EXPECT_EQ(e.line(), 5u);

  e = error_of("model bad\nstates x1\nfrobnicate\n");
  EXPECT_EQ(e.code(), ErrorCode::Syntax);
  EXPECT_EQ(e.line(), 3u);
}

TEST(LoadModel, Validation) {
  EXPECT_EQ(error_of("model bad\nstates x1\ninputs u1\nparam k nan\ndx1 = -x1\ny1 = k\n").category(),
            ErrorCategory::Validation);
  EXPECT_EQ(error_of("model bad\nstates x1\ninputs u1\ndx1 = -x1 + u1\n").code(), ErrorCode::Validation);
  EXPECT_EQ(error_of("model bad\nstates x1 x1\ninputs u1\ndx1 = -x1 + u1\ny1 = x1\n").code(), ErrorCode::Validation);
  EXPECT_EQ(error_of("model bad\nstates x1\ninputs u1\norder_states + -\ndx1 = -x1 + u1\ny1 = x1\n").code(),
            ErrorCode::DimensionMismatch);
  EXPECT_EQ(error_of("model bad\nstates x1\ninputs u1\ndx1 = -x1\ny1 = x1\nlinear A = [[1]]\n").code(),
            ErrorCode::Validation);
}

TEST(LoadModel, TextLinearMatchesMatrixPath) {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> U(-2.0, 2.0);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t n = 1 + trial % 4, m = 1 + trial % 3;
    Matrix A(n, n), B(n, m), C(m, n);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) A(i, j) = U(rng);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < m; ++j) B(i, j) = U(rng);
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) C(i, j) = U(rng);
    std::ostringstream doc;
    doc << "model t\nstates";
    for (std::size_t i = 0; i < n; ++i) doc << " x" << i + 1;
    doc << "\ninputs";
    for (std::size_t j = 0; j < m; ++j) doc << " u" << j + 1;
    doc << '\n';
    for (std::size_t i = 0; i < n; ++i) {
      doc << "dx" << i + 1 << " = 0";
      for (std::size_t j = 0; j < n; ++j) doc << " + " << format_number(A(i, j)) << "*x" << j + 1;
      for (std::size_t j = 0; j < m; ++j) doc << " + " << format_number(B(i, j)) << "*u" << j + 1;
      doc << '\n';
    }
    for (std::size_t i = 0; i < m; ++i) {
      doc << "y" << i + 1 << " = 0";
      for (std::size_t j = 0; j < n; ++j) doc << " - " << format_number(C(i, j)) << "*x" << j + 1;
      doc << '\n';
    }
    const ModelDef text = load_model(doc.str());
    const ModelDef mat = ModelDef::linear("t", {A, B, C});
    for (int s = 0; s < 5; ++s) {
      Vec x(n), u(m);
      for (double& v : x) v = U(rng);
      for (double& v : u) v = U(rng);
      const Vec a = text.rhs(x, u), b = mat.rhs(x, u);
      const Vec ya = text.output(x), yb = mat.output(x);
      for (std::size_t i = 0; i < n; ++i) EXPECT_NEAR(a[i], b[i], 1e-12 * (1.0 + std::abs(b[i])));
      for (std::size_t i = 0; i < m; ++i) EXPECT_NEAR(ya[i], yb[i], 1e-12 * (1.0 + std::abs(yb[i])));
    }
  }
}

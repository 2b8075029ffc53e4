#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <fstream>

#include "cluster_route/ensemble.hpp"
#include "cluster_route/grading.hpp"
#include "support.hpp"

using namespace cluster_route;
using namespace test_support;

TEST_CASE("numeric grading") {
  CHECK(grade("42", "42", GraderKind::Numeric));
  CHECK(grade(normalize_answer("0.3333333", GraderKind::Numeric), "1/3", GraderKind::Numeric));
  CHECK(!grade("0.334", "1/3", GraderKind::Numeric));
  CHECK(grade("2", "6/3", GraderKind::Numeric));
  CHECK(grade("1000", "1,000", GraderKind::Numeric));
  CHECK(!grade("", "0", GraderKind::Numeric));
}

TEST_CASE("multiple choice and exact grading") {
  CHECK(!grade("B", "C", GraderKind::MultipleChoice));
  CHECK(grade("C", "(c)", GraderKind::MultipleChoice));
  CHECK(grade("paris", "Paris.", GraderKind::Exact));
  CHECK(!grade("lyon", "Paris", GraderKind::Exact));
}

TEST_CASE("code grading runs the configured command") {
  TempDir dir;
  const std::string script = dir.file("grader.sh");
  {
    std::ofstream out(script);
    // Passes when the JSON on stdin mentions "return 1".
    out << "#!/bin/sh\ngrep -q 'return 1'\n";
  }
  GraderConfig cfg;
  cfg.code_command = "sh " + script;
  CHECK(grade("def f(): return 1", "assert f() == 1", GraderKind::CodePluggable, cfg));
  CHECK(!grade("def f(): return 2", "assert f() == 1", GraderKind::CodePluggable, cfg));
  CHECK(error_code_of([&] { grade("x", "y", GraderKind::CodePluggable); }) == Errc::GraderUnavailable);
}

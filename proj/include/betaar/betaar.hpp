#pragma once

// Everything except the file formats in betaar/io.hpp, which need the
// vendored JSON header.

#include "betaar/detector.hpp"
#include "betaar/errors.hpp"
#include "betaar/evalkit.hpp"
#include "betaar/experiments.hpp"
#include "betaar/inference.hpp"
#include "betaar/model.hpp"
#include "betaar/optimize.hpp"
#include "betaar/parallel.hpp"
#include "betaar/rng.hpp"
#include "betaar/specfun.hpp"

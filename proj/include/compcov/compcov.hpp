#pragma once

#include <compcov/compositional.hpp>
#include <compcov/error.hpp>
#include <compcov/metrics.hpp>
#include <compcov/parallel.hpp>
#include <compcov/simulation.hpp>
#include <compcov/solver.hpp>
#include <compcov/tensor.hpp>
#include <compcov/tuning.hpp>

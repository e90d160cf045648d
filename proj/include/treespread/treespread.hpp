#pragma once

#include "treespread/analysis.hpp"
#include "treespread/dynamics.hpp"
#include "treespread/error.hpp"
#include "treespread/mc_sim.hpp"
#include "treespread/offspring.hpp"
#include "treespread/parallel.hpp"
#include "treespread/rng.hpp"

#pragma once

#include "glassclock/errors.hpp"
#include "glassclock/rng.hpp"
#include "glassclock/scales.hpp"
#include "glassclock/hypercube.hpp"
#include "glassclock/hamiltonian.hpp"
#include "glassclock/dynamics.hpp"
#include "glassclock/stats.hpp"
#include "glassclock/aux_block.hpp"
#include "glassclock/limit_laws.hpp"
#include "glassclock/experiments.hpp"

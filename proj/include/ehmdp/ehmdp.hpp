#pragma once

#include "ehmdp/constrained.hpp"
#include "ehmdp/errors.hpp"
#include "ehmdp/heuristics.hpp"
#include "ehmdp/io.hpp"
#include "ehmdp/mdp.hpp"
#include "ehmdp/model.hpp"
#include "ehmdp/rng.hpp"
#include "ehmdp/simulation.hpp"
#include "ehmdp/verifier.hpp"

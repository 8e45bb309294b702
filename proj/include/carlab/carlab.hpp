#pragma once

#include "carlab/boolean_inverse.hpp"
#include "carlab/car_sim.hpp"
#include "carlab/core.hpp"
#include "carlab/io.hpp"
#include "carlab/lcpr.hpp"
#include "carlab/mdp.hpp"
#include "carlab/transition_poset.hpp"

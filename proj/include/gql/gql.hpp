#pragma once

#include "gql/admm.hpp"
#include "gql/io.hpp"
#include "gql/kkt.hpp"
#include "gql/ls.hpp"
#include "gql/model.hpp"
#include "gql/montecarlo.hpp"
#include "gql/pilot.hpp"
#include "gql/prox.hpp"
#include "gql/rng.hpp"
#include "gql/simgen.hpp"
#include "gql/tuning.hpp"
#include "gql/types.hpp"

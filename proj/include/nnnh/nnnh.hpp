#pragma once

#include "nnnh/events.hpp"
#include "nnnh/eval.hpp"
#include "nnnh/intensity.hpp"
#include "nnnh/likelihood.hpp"
#include "nnnh/log.hpp"
#include "nnnh/model.hpp"
#include "nnnh/network.hpp"
#include "nnnh/optimizer.hpp"
#include "nnnh/rng.hpp"
#include "nnnh/simulate.hpp"

#pragma once

#include "stringbo/acquisition.hpp"
#include "stringbo/analysis.hpp"
#include "stringbo/bo.hpp"
#include "stringbo/ga.hpp"
#include "stringbo/gp.hpp"
#include "stringbo/grammar.hpp"
#include "stringbo/kernels.hpp"
#include "stringbo/objectives.hpp"
#include "stringbo/rng.hpp"
#include "stringbo/spaces.hpp"
#include "stringbo/tokens.hpp"

#pragma once

#include "covlap/error.hpp"
#include "covlap/symmat.hpp"
#include "covlap/objective.hpp"
#include "covlap/bcd.hpp"
#include "covlap/laplace.hpp"
#include "covlap/stats.hpp"
#include "covlap/sampler.hpp"
#include "covlap/simbench.hpp"
#include "covlap/lda.hpp"
#include "covlap/io.hpp"

#pragma once

#include "wbary/bench.hpp"
#include "wbary/generate.hpp"
#include "wbary/ibp.hpp"
#include "wbary/io.hpp"
#include "wbary/ipm.hpp"
#include "wbary/lp_model.hpp"
#include "wbary/maaipm.hpp"
#include "wbary/measures.hpp"
#include "wbary/normal_kernel.hpp"

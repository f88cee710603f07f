#ifndef VRS_VRS_HPP
#define VRS_VRS_HPP

#include "errors.hpp"
#include "numeric.hpp"
#include "sampling.hpp"
#include "problems.hpp"
#include "dataio.hpp"
#include "optimizers.hpp"
#include "bruteforce.hpp"
#include "verify.hpp"
#include "experiment.hpp"

#endif

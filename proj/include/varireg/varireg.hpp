#ifndef VARIREG_VARIREG_HPP
#define VARIREG_VARIREG_HPP

// Library headers without the CLI (which pulls in CLI11 and nlohmann/json).
#include "varireg/curve.hpp"
#include "varireg/diagnostics.hpp"
#include "varireg/error.hpp"
#include "varireg/fpca.hpp"
#include "varireg/parallel.hpp"
#include "varireg/registration.hpp"
#include "varireg/simulate.hpp"
#include "varireg/smoothing.hpp"
#include "varireg/variation.hpp"
#include "varireg/warp_map.hpp"

#endif  // VARIREG_VARIREG_HPP

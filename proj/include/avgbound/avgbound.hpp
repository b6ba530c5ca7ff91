#pragma once

#include "avgbound/error.hpp"
#include "avgbound/polynomial.hpp"
#include "avgbound/parse.hpp"
#include "avgbound/system.hpp"
#include "avgbound/config.hpp"
#include "avgbound/sdp.hpp"
#include "avgbound/sdpa_io.hpp"
#include "avgbound/sos.hpp"
#include "avgbound/bound.hpp"
#include "avgbound/synthesis.hpp"
#include "avgbound/simulator.hpp"
#include "avgbound/sweep.hpp"
#include "avgbound/json_io.hpp"

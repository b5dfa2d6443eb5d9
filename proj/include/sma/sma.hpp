#pragma once

#include "sma/config.hpp"
#include "sma/error.hpp"
#include "sma/experiment.hpp"
#include "sma/ingest.hpp"
#include "sma/metrics.hpp"
#include "sma/model_core.hpp"
#include "sma/random.hpp"
#include "sma/rating_sma.hpp"
#include "sma/report.hpp"
#include "sma/report_io.hpp"
#include "sma/topn_sma.hpp"

#pragma once

#include "mldiag/behavioral.hpp"
#include "mldiag/campaign_io.hpp"
#include "mldiag/error.hpp"
#include "mldiag/features.hpp"
#include "mldiag/ids.hpp"
#include "mldiag/json_util.hpp"
#include "mldiag/model.hpp"
#include "mldiag/monitor.hpp"
#include "mldiag/numeric.hpp"
#include "mldiag/pipeline.hpp"
#include "mldiag/report.hpp"
#include "mldiag/simulator.hpp"
#include "mldiag/structural.hpp"

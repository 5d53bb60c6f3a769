#pragma once

#include "monofb/error.hpp"
#include "monofb/matrix.hpp"
#include "monofb/expr.hpp"
#include "monofb/order.hpp"
#include "monofb/model.hpp"
#include "monofb/parallel.hpp"
#include "monofb/newton.hpp"
#include "monofb/integrators.hpp"
#include "monofb/monotonicity.hpp"
#include "monofb/linear.hpp"
#include "monofb/characteristic.hpp"
#include "monofb/extended.hpp"
#include "monofb/dde.hpp"
#include "monofb/report_json.hpp"

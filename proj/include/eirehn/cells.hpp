#pragma once

#include "eirehn/cells/cell.hpp"
#include "eirehn/cells/eirehn.hpp"
#include "eirehn/cells/elastic_gate.hpp"
#include "eirehn/cells/rnn.hpp"
#include "eirehn/cells/srhn.hpp"

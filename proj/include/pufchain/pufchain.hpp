#pragma once

#include "pufchain/common.hpp"
#include "pufchain/random.hpp"
#include "pufchain/sha256.hpp"
#include "pufchain/puf.hpp"
#include "pufchain/fom.hpp"
#include "pufchain/ledger.hpp"
#include "pufchain/registry.hpp"
#include "pufchain/consensus.hpp"
#include "pufchain/netsim.hpp"
#include "pufchain/harness.hpp"

#pragma once

#include "por/bytes.hpp"
#include "por/chain.hpp"
#include "por/codec.hpp"
#include "por/config.hpp"
#include "por/consensus.hpp"
#include "por/encoder.hpp"
#include "por/error.hpp"
#include "por/hash.hpp"
#include "por/matrix.hpp"
#include "por/numerics.hpp"
#include "por/rng.hpp"
#include "por/sim.hpp"
#include "por/store.hpp"
#include "por/transaction.hpp"

#pragma once

#include "bnncert/attack.hpp"
#include "bnncert/certify.hpp"
#include "bnncert/error.hpp"
#include "bnncert/io.hpp"
#include "bnncert/net.hpp"
#include "bnncert/parallel.hpp"
#include "bnncert/posterior.hpp"
#include "bnncert/propagate.hpp"
#include "bnncert/search.hpp"
#include "bnncert/spec.hpp"
#include "bnncert/sweep.hpp"
#include "bnncert/trainer.hpp"
#include "bnncert/validate.hpp"

#pragma once

#include "capqe/checkpoint.hpp"
#include "capqe/dataio.hpp"
#include "capqe/metrics.hpp"
#include "capqe/model.hpp"
#include "capqe/optim.hpp"
#include "capqe/pretrain.hpp"
#include "capqe/ratings.hpp"
#include "capqe/synthetic.hpp"
#include "capqe/training.hpp"

#pragma once

#include "choicehash/burr.hpp"
#include "choicehash/experiments.hpp"
#include "choicehash/hashcore.hpp"
#include "choicehash/io.hpp"
#include "choicehash/linsys.hpp"
#include "choicehash/orientation.hpp"
#include "choicehash/ribbon.hpp"

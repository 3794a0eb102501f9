"""Expected metric values for a set of confusion matrices, computed directly
from the textbook definitions (classes without ground truth are left out of
the means).

usage: python make_metric_fixtures.py tests/data/metric_fixtures.json
"""
import json
import sys

import numpy as np
fx = [
 [[1,1],[0,2]],
 [[5,0],[0,5]],
 [[3,1,0],[2,4,1],[0,0,6]],
 [[10,0,0],[0,0,0],[0,5,5]],
 [[0,4],[3,0]],
 [[7]],
 [[2,1,1,0],[0,3,0,1],[1,0,4,0],[0,0,0,0]],
 [[100,20],[30,50]],
 [[0,0,0],[1,1,1],[0,0,9]],
 [[4,0,0,1],[0,6,2,0],[1,1,8,0],[0,0,0,3]],
]
out=[]
for c in fx:
    c=np.array(c,float); gt=c.sum(1); pr=c.sum(0); tp=np.diag(c); tot=c.sum()
    pres=gt>0
    iou=tp[pres]/(gt+pr-tp)[pres]; acc=tp[pres]/gt[pres]
    fw=(gt[pres]/tot*iou).sum()
    out.append(dict(confusion=c.astype(int).tolist(), miou=round(float(100*iou.mean()), 6), pacc=round(float(100*tp.sum()/tot), 6), macc=round(float(100*acc.mean()), 6), fwiou=round(float(100*fw), 6)))
with open(sys.argv[1], 'w') as f:
    json.dump(out, f, indent=1)

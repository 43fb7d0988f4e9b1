import pychrono as chrono
import pychrono.irrlicht as chronoirr

# crank demo
sys = chrono.ChSystemNSC()
sys.SetGravitationalAcceleration(chrono.ChVector3d(0, -9.81, 0))

ground = chrono.ChBodyEasyBox(10, 0.5, 10, 1000, True, True)
ground.SetPos(chrono.ChVector3d(0, -1, 0))
ground.SetFixed(True)
sys.Add(ground)

crank = chrono.ChBodyEasyBox(2, 0.1, 0.1, 700)
crank.SetPos(chrono.ChVector3d(0, 5, 0))
crank.SetMass(14)
sys.Add(crank)

time_step = 0.004
t = 0.0
while t < 2.0:
    sys.DoStepDynamics(time_step)
    t += time_step
print("crank final height", crank.GetPos().y)

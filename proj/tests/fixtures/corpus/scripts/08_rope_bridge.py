import pychrono as chrono
import pychrono.irrlicht as chronoirr

# rope bridge demo
sys = chrono.ChSystemNSC()
sys.SetGravitationalAcceleration(chrono.ChVector3d(0, -9.81, 0))

ground = chrono.ChBodyEasyBox(10, 0.5, 10, 1000, True, True)
ground.SetPos(chrono.ChVector3d(0, -1, 0))
ground.SetFixed(True)
sys.Add(ground)

plank = chrono.ChBodyEasyBox(0.3, 0.05, 1, 400)
plank.SetPos(chrono.ChVector3d(0, 9, 0))
plank.SetMass(18)
sys.Add(plank)

time_step = 0.003
t = 0.0
while t < 2.0:
    sys.DoStepDynamics(time_step)
    t += time_step
print("rope_bridge final height", plank.GetPos().y)

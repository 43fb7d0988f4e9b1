import pychrono as chrono
import pychrono.irrlicht as chronoirr

# gear pair demo
sys = chrono.ChSystemNSC()
sys.SetGravitationalAcceleration(chrono.ChVector3d(0, -9.81, 0))

ground = chrono.ChBodyEasyBox(10, 0.5, 10, 1000, True, True)
ground.SetPos(chrono.ChVector3d(0, -1, 0))
ground.SetFixed(True)
sys.Add(ground)

gear = chrono.ChBodyEasyCylinder(chrono.ChAxis_Z, 0.3, 0.05, 900)
gear.SetPos(chrono.ChVector3d(0, 8, 0))
gear.SetMass(17)
sys.Add(gear)

time_step = 0.002
t = 0.0
while t < 2.0:
    sys.DoStepDynamics(time_step)
    t += time_step
print("gear_pair final height", gear.GetPos().y)
